#include "ptgan/transfer.hpp"

#include <algorithm>
#include <cmath>

#include "ptgan/errors.hpp"
#include "ptgan/image_io.hpp"
#include "ptgan/training.hpp"

namespace ptgan {

std::string to_string(Direction d) { return d == Direction::AtoB ? "AtoB" : "BtoA"; }

Direction direction_from_string(const std::string& s) {
  if (s == "AtoB") return Direction::AtoB;
  if (s == "BtoA") return Direction::BtoA;
  throw InvalidConfig("direction: expected AtoB or BtoA, got '" + s + "'");
}

DatasetManifest transfer_with(const DatasetManifest& source, const ImageMap& map, int model_size,
                              const std::string& target_tag, const std::filesystem::path& out_dir,
                              const TransferOptions& options) {
  if (source.records.empty()) throw EmptyDataset("transfer source manifest '" + source.name + "' has no records");
  const auto dir = out_dir / target_tag;
  std::filesystem::create_directories(dir);

  DatasetManifest out;
  out.domain_tag = source.domain_tag + "*_" + target_tag;
  out.name = out.domain_tag;
  out.records.reserve(source.records.size());
  for (const auto& rec : source.records) {
    const Raster raw = read_raster(rec.image_path);
    if (raw.height < 1 || raw.width < 1) throw ShapeMismatch(rec.image_path + ": empty image");
    ImageTensor<float> x = to_tensor(raw);
    if (x.height != model_size || x.width != model_size) x = resize_bilinear(x, model_size, model_size);
    ImageTensor<float> y = map(x);
    if (y.height != model_size || y.width != model_size || y.channels != 3) {
      throw ShapeMismatch(rec.image_path + ": mapping changed the image shape");
    }
    if (options.restore_source_size && (raw.height != model_size || raw.width != model_size)) {
      y = resize_bilinear(y, raw.height, raw.width);
    }
    const auto path = dir / (std::filesystem::path(rec.image_path).stem().string() + ".png");
    save_image(path, y);
    PersonRecord r = rec;
    r.image_path = std::filesystem::absolute(path).string();
    out.records.push_back(std::move(r));
  }
  return out;
}

DatasetManifest transfer_dataset(const DatasetManifest& source, const std::filesystem::path& checkpoint,
                                 Direction direction, const std::filesystem::path& out_dir,
                                 const TransferOptions& options) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const auto& model = ckpt.state.model;
  const auto& gen = direction == Direction::AtoB ? model.G : model.G_bar;
  const std::string target = direction == Direction::AtoB ? ckpt.info.target_tag : ckpt.info.source_tag;
  return transfer_with(
      source, [&](const ImageTensor<float>& x) { return gen.forward(x); }, ckpt.info.config.image_size, target,
      out_dir, options);
}

DatasetManifest per_camera_transfer(const DatasetManifest& source,
                                    const std::map<int, std::filesystem::path>& checkpoints,
                                    const std::filesystem::path& out_dir, const TransferOptions& options) {
  if (checkpoints.empty()) throw InvalidConfig("checkpoints: at least one (camera, checkpoint) pair is required");
  std::vector<DatasetManifest> parts;
  for (const auto& [camera, path] : checkpoints) {
    // separate subdirectories keep two cameras sharing a target tag apart
    parts.push_back(transfer_dataset(source, path, Direction::AtoB, out_dir / ("cam" + std::to_string(camera)),
                                     options));
  }
  if (parts.size() == 1) return parts.front();
  return merge_manifests(parts);
}

double masked_mean_abs_difference(const ImageTensor<float>& a, const ImageTensor<float>& b,
                                  const ForegroundMask<float>& mask) {
  require_same_shape(a, b, "foreground change");
  require_mask_matches(a, mask, "foreground change");
  double num = 0.0;
  const double weight = static_cast<double>(mask.weights.sum()) * a.channels;
  if (weight <= 0.0) return 0.0;
  Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>> m(mask.weights.data(), mask.weights.size());
  for (int c = 0; c < a.channels; ++c) {
    num += static_cast<double>((a.data.row(c) - b.data.row(c)).cwiseAbs().cwiseProduct(m).sum());
  }
  return num / weight;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ForegroundChangeReport foreground_change_report(const DatasetManifest& source, const DatasetManifest& transferred,
                                                const MaskSource& masks, int image_size) {
  if (source.records.size() != transferred.records.size()) {
    throw AlignmentMismatch("manifests differ in length (" + std::to_string(source.records.size()) + " vs " +
                            std::to_string(transferred.records.size()) + ")");
  }
  ForegroundChangeReport report;
  for (size_t i = 0; i < source.records.size(); ++i) {
    const auto& s = source.records[i];
    const auto& t = transferred.records[i];
    if (s.person_id != t.person_id || s.camera_id != t.camera_id) {
      throw AlignmentMismatch("record " + std::to_string(i) + " labels differ: " + s.image_path + " vs " +
                              t.image_path);
    }
    const auto a = load_image(s.image_path, image_size);
    const auto b = load_image(t.image_path, image_size);
    report.per_image.push_back(masked_mean_abs_difference(a, b, mask_for(s, masks, image_size)));
  }
  if (!report.per_image.empty()) {
    double sum = 0.0;
    for (double v : report.per_image) sum += v;
    report.mean = sum / static_cast<double>(report.per_image.size());
    report.median = percentile(report.per_image, 50.0);
    report.p90 = percentile(report.per_image, 90.0);
    report.max = *std::max_element(report.per_image.begin(), report.per_image.end());
  }
  return report;
}

}  // namespace ptgan
