#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ptgan/data_model.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan {

/// Per-camera perturbation layered on top of its domain's style.
struct CameraStyle {
  double brightness_offset = 0.0;
  double hue_shift_degrees = 0.0;
  std::array<double, 3> background_tint{0.0, 0.0, 0.0};
};

/// Rendering style of one synthetic domain. Colors and offsets are in [0, 1]
/// intensity units.
struct DomainStyle {
  std::string tag;
  std::array<double, 3> background_low{0.5, 0.5, 0.5};
  std::array<double, 3> background_high{0.7, 0.7, 0.7};
  double brightness_offset = 0.0;
  double hue_shift_degrees = 0.0;
  double noise_level = 0.0;
  /// Optional; camera k uses cameras[k - 1] when present.
  std::vector<CameraStyle> cameras;
};

inline DomainStyle styled(std::string tag) {
  DomainStyle s;
  s.tag = std::move(tag);
  return s;
}

struct SynthConfig {
  int num_identities = 20;
  /// Identities rendered in domain B; 0 means num_identities.
  int num_identities_b = 0;
  int cameras_per_domain = 2;
  int images_per_identity_per_camera = 3;
  int image_size = 64;
  /// Render the same identities in both domains instead of disjoint sets.
  bool shared_identities = false;
  DomainStyle style_a = styled("synthA");
  DomainStyle style_b = styled("synthB");
  std::uint64_t seed = 0;

  int identities_b() const { return num_identities_b > 0 ? num_identities_b : num_identities; }
  /// Throws InvalidConfig naming the offending field.
  void validate() const;
};

SynthConfig parse_synth_config(const std::string& json_text);
SynthConfig load_synth_config(const std::filesystem::path& path);
std::string synth_config_to_json(const SynthConfig& config);

/// One rendered domain. Images and masks are aligned with manifest records.
struct SynthDomain {
  DatasetManifest manifest;
  std::vector<ImageTensor<float>> images;
  std::vector<ForegroundMask<float>> masks;
};

struct SynthOutput {
  SynthDomain a;
  SynthDomain b;
};

/// Renders both domains. Images are quantized to 8 bits before conversion,
/// so what is written to disk decodes back to exactly these tensors.
SynthOutput synth_generate(const SynthConfig& config);

/// Writes `<root>/<tag>/images/*.png`, `<root>/<tag>/masks/*.png` and
/// `<root>/<tag>/manifest.jsonl`; record paths are updated in place.
void materialize(SynthDomain& domain, const std::filesystem::path& root);

}  // namespace ptgan
