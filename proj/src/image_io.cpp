#include "ptgan/image_io.hpp"

#include <cmath>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ptgan/errors.hpp"

namespace ptgan {

ImageTensor<float> to_tensor(const Raster& raster) {
  ImageTensor<float> t(raster.channels, raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      for (int c = 0; c < raster.channels; ++c) {
        t.at(c, y, x) = static_cast<float>(raster.at(y, x, c)) / 127.5f - 1.0f;
      }
    }
  }
  return t;
}

Raster to_raster(const ImageTensor<float>& image) {
  Raster r;
  r.height = image.height;
  r.width = image.width;
  r.channels = image.channels;
  r.pixels.resize(static_cast<size_t>(r.height) * r.width * r.channels);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < r.channels; ++c) {
        const float v = std::round((image.at(c, y, x) + 1.0f) * 127.5f);
        r.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
      }
    }
  }
  return r;
}

Raster read_raster(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageDecodeError("cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Raster r;
  r.height = rgb.rows;
  r.width = rgb.cols;
  r.channels = 3;
  r.pixels.resize(static_cast<size_t>(r.height) * r.width * 3);
  for (int y = 0; y < r.height; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + r.width * 3, r.pixels.begin() + static_cast<long>(y) * r.width * 3);
  }
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const int type = raster.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat m(raster.height, raster.width, type, const_cast<std::uint8_t*>(raster.pixels.data()));
  cv::Mat out;
  if (raster.channels == 3) {
    cv::cvtColor(m, out, cv::COLOR_RGB2BGR);
  } else {
    out = m;
  }
  if (!cv::imwrite(path.string(), out)) throw Error("IoError", "cannot write " + path.string());
}

void save_image(const std::filesystem::path& path, const ImageTensor<float>& image) {
  write_png(path, to_raster(image));
}

ImageTensor<float> resize_bilinear(const ImageTensor<float>& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  ImageTensor<float> out(image.channels, height, width);
  for (int c = 0; c < image.channels; ++c) {
    cv::Mat src(image.height, image.width, CV_32FC1, const_cast<float*>(image.data.row(c).data()));
    cv::Mat dst(height, width, CV_32FC1, out.data.row(c).data());
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  }
  out.data = out.data.cwiseMax(-1.0f).cwiseMin(1.0f);
  return out;
}

ImageTensor<float> load_image(const std::filesystem::path& path, int size) {
  ImageTensor<float> t = to_tensor(read_raster(path));
  return resize_bilinear(t, size, size);
}

ForegroundMask<float> read_mask_file(const std::filesystem::path& path, int height, int width) {
  if (!std::filesystem::is_regular_file(path)) throw MissingMask("mask file " + path.string() + " does not exist");
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw CorruptMask("cannot decode mask " + path.string());
  if (m.rows != height || m.cols != width) {
    cv::Mat resized;
    cv::resize(m, resized, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
    m = resized;
  }
  ForegroundMask<float> mask(height, width);
  for (int y = 0; y < height; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x) mask.weights(y, x) = static_cast<float>(row[x]) / 255.0f;
  }
  return mask;
}

void write_mask_file(const std::filesystem::path& path, const ForegroundMask<float>& mask) {
  Raster r;
  r.height = mask.height;
  r.width = mask.width;
  r.channels = 1;
  r.pixels.resize(static_cast<size_t>(r.height) * r.width);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const float v = std::round(std::clamp(mask.weights(y, x), 0.0f, 1.0f) * 255.0f);
      r.at(y, x, 0) = static_cast<std::uint8_t>(v);
    }
  }
  write_png(path, r);
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot read " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace ptgan
