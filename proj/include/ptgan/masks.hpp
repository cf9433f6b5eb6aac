#pragma once

#include <string>

#include "ptgan/data_model.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan {

/// Shape of the fallback prior, in fractions of the image size.
struct PriorParams {
  double center_x = 0.5;
  double center_y = 0.5;
  double radius_x = 0.28;
  double radius_y = 0.45;
  /// Width of the cosine falloff band beyond the ellipse, in normalized radius units.
  double border = 0.15;
};

struct MaskSource {
  enum class Kind { file, exact_synthetic, baseline_prior };
  Kind kind = Kind::file;
  PriorParams prior;

  static MaskSource from_files() { return {Kind::file, {}}; }
  static MaskSource exact() { return {Kind::exact_synthetic, {}}; }
  static MaskSource baseline(PriorParams p = {}) { return {Kind::baseline_prior, p}; }
};

std::string to_string(MaskSource::Kind kind);
MaskSource::Kind mask_kind_from_string(const std::string& s);

/// Loads `record.mask_path`, resampled to target_size x target_size.
ForegroundMask<float> load_mask(const PersonRecord& record, int target_size);

/// Centered soft ellipse: 1 inside, cosine falloff over the border band, 0 beyond.
ForegroundMask<float> baseline_prior_mask(int height, int width, const PriorParams& params = {});

/// Mean weight.
double mask_coverage(const ForegroundMask<float>& mask);

/// Dispatches on the source kind. File-backed kinds fail with MissingMask
/// when the record has no mask rather than substituting the prior.
ForegroundMask<float> mask_for(const PersonRecord& record, const MaskSource& source, int target_size);

}  // namespace ptgan
