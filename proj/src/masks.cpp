#include "ptgan/masks.hpp"

#include <cmath>
#include <numbers>

#include "ptgan/errors.hpp"
#include "ptgan/image_io.hpp"

namespace ptgan {

std::string to_string(MaskSource::Kind kind) {
  switch (kind) {
    case MaskSource::Kind::file: return "file";
    case MaskSource::Kind::exact_synthetic: return "exact_synthetic";
    case MaskSource::Kind::baseline_prior: return "baseline_prior";
  }
  return "file";
}

MaskSource::Kind mask_kind_from_string(const std::string& s) {
  if (s == "file") return MaskSource::Kind::file;
  if (s == "exact_synthetic") return MaskSource::Kind::exact_synthetic;
  if (s == "baseline_prior") return MaskSource::Kind::baseline_prior;
  throw InvalidConfig("unknown mask source '" + s + "'");
}

ForegroundMask<float> load_mask(const PersonRecord& record, int target_size) {
  if (!record.mask_path) throw MissingMask("record " + record.image_path + " has no mask_path");
  ForegroundMask<float> mask = read_mask_file(*record.mask_path, target_size, target_size);
  if (!is_valid_mask(mask)) throw CorruptMask("mask " + *record.mask_path + " has weights outside [0, 1]");
  return mask;
}

ForegroundMask<float> baseline_prior_mask(int height, int width, const PriorParams& p) {
  ForegroundMask<float> mask(height, width);
  const double border = std::max(p.border, 1e-9);
  for (int y = 0; y < height; ++y) {
    const double v = ((y + 0.5) / height - p.center_y) / p.radius_y;
    for (int x = 0; x < width; ++x) {
      const double u = ((x + 0.5) / width - p.center_x) / p.radius_x;
      const double d = std::sqrt(u * u + v * v);
      double w = 0.0;
      if (d <= 1.0) {
        w = 1.0;
      } else if (d < 1.0 + border) {
        w = 0.5 * (1.0 + std::cos(std::numbers::pi * (d - 1.0) / border));
      }
      mask.weights(y, x) = static_cast<float>(w);
    }
  }
  return mask;
}

double mask_coverage(const ForegroundMask<float>& mask) {
  if (mask.weights.size() == 0) return 0.0;
  return static_cast<double>(mask.weights.template cast<double>().mean());
}

ForegroundMask<float> mask_for(const PersonRecord& record, const MaskSource& source, int target_size) {
  switch (source.kind) {
    case MaskSource::Kind::file:
    case MaskSource::Kind::exact_synthetic: return load_mask(record, target_size);
    case MaskSource::Kind::baseline_prior: return baseline_prior_mask(target_size, target_size, source.prior);
  }
  return load_mask(record, target_size);
}

}  // namespace ptgan
