#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ptgan/tensor.hpp"

namespace ptgan {

/// 8-bit interleaved RGB (or gray) raster; what goes to and from disk.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
};

/// [0, 255] -> [-1, 1].
ImageTensor<float> to_tensor(const Raster& raster);
/// [-1, 1] -> [0, 255] with rounding and clamping.
Raster to_raster(const ImageTensor<float>& image);

/// Decodes PNG/JPEG as RGB and resamples bilinearly to size x size when needed.
ImageTensor<float> load_image(const std::filesystem::path& path, int size);
Raster read_raster(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);
void save_image(const std::filesystem::path& path, const ImageTensor<float>& image);

/// Bilinear resampling of an RGB tensor.
ImageTensor<float> resize_bilinear(const ImageTensor<float>& image, int height, int width);

/// Reads a single-channel mask (0 background, 255 foreground), resampled with
/// nearest neighbour and mapped to [0, 1].
ForegroundMask<float> read_mask_file(const std::filesystem::path& path, int height, int width);
void write_mask_file(const std::filesystem::path& path, const ForegroundMask<float>& mask);

/// FNV-1a over the file's bytes, for reproducibility checks.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace ptgan
