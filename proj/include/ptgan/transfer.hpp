#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ptgan/data_model.hpp"
#include "ptgan/masks.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan {

enum class Direction { AtoB, BtoA };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

/// Image-to-image mapping applied at a fixed working resolution.
using ImageMap = std::function<ImageTensor<float>(const ImageTensor<float>&)>;

struct TransferOptions {
  /// Resize outputs back to each source image's own dimensions.
  bool restore_source_size = false;
};

/// Applies `map` to every record at `model_size` and writes
/// `<out_dir>/<target_tag>/<stem>.png`. Labels, camera ids and mask paths are
/// carried over; domain_tag becomes `<source tag>*_<target_tag>`.
DatasetManifest transfer_with(const DatasetManifest& source, const ImageMap& map, int model_size,
                              const std::string& target_tag, const std::filesystem::path& out_dir,
                              const TransferOptions& options = {});

/// Loads the checkpoint and uses G (AtoB) or G_bar (BtoA).
DatasetManifest transfer_dataset(const DatasetManifest& source, const std::filesystem::path& checkpoint,
                                 Direction direction, const std::filesystem::path& out_dir,
                                 const TransferOptions& options = {});

/// One AtoB transfer per target camera, merged. Keys are camera ids.
DatasetManifest per_camera_transfer(const DatasetManifest& source,
                                    const std::map<int, std::filesystem::path>& checkpoints,
                                    const std::filesystem::path& out_dir, const TransferOptions& options = {});

struct ForegroundChangeReport {
  /// Masked mean absolute difference per record, in [-1, 1] intensity units.
  std::vector<double> per_image;
  double mean = 0.0;
  double median = 0.0;
  double p90 = 0.0;
  double max = 0.0;
};

/// Compares record-aligned manifests on the source foreground. Throws
/// AlignmentMismatch when counts or (person, camera) labels disagree.
ForegroundChangeReport foreground_change_report(const DatasetManifest& source, const DatasetManifest& transferred,
                                                const MaskSource& masks, int image_size);

/// Same statistic over in-memory tensors.
double masked_mean_abs_difference(const ImageTensor<float>& a, const ImageTensor<float>& b,
                                  const ForegroundMask<float>& mask);

/// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

}  // namespace ptgan
