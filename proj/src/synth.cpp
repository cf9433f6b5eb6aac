#include "ptgan/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ptgan/errors.hpp"
#include "json_fields.hpp"
#include "ptgan/image_io.hpp"
#include "ptgan/random.hpp"

namespace ptgan {

using nlohmann::json;
using detail::read_field;
using detail::require_known_keys;

namespace {

constexpr int kSynthSchemaVersion = 1;

void check_color(const std::array<double, 3>& c, const std::string& field) {
  for (double v : c) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidConfig(field + ": color components must lie in [0, 1]");
  }
}

void validate_style(const DomainStyle& s, const std::string& prefix) {
  if (s.tag.empty()) throw InvalidConfig(prefix + ".tag: must be non-empty");
  check_color(s.background_low, prefix + ".background_low");
  check_color(s.background_high, prefix + ".background_high");
  for (int c = 0; c < 3; ++c) {
    if (s.background_low[c] > s.background_high[c]) {
      throw InvalidConfig(prefix + ".background_low: exceeds background_high");
    }
  }
  if (!(std::abs(s.brightness_offset) <= 1.0)) throw InvalidConfig(prefix + ".brightness_offset: must lie in [-1, 1]");
  if (!std::isfinite(s.hue_shift_degrees)) throw InvalidConfig(prefix + ".hue_shift_degrees: must be finite");
  if (!(s.noise_level >= 0.0 && s.noise_level <= 1.0)) throw InvalidConfig(prefix + ".noise_level: must lie in [0, 1]");
  for (size_t i = 0; i < s.cameras.size(); ++i) {
    const auto& cam = s.cameras[i];
    const std::string p = prefix + ".cameras[" + std::to_string(i) + "]";
    if (!(std::abs(cam.brightness_offset) <= 1.0)) throw InvalidConfig(p + ".brightness_offset: must lie in [-1, 1]");
    if (!std::isfinite(cam.hue_shift_degrees)) throw InvalidConfig(p + ".hue_shift_degrees: must be finite");
    for (double t : cam.background_tint) {
      if (!(std::abs(t) <= 1.0)) throw InvalidConfig(p + ".background_tint: components must lie in [-1, 1]");
    }
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (num_identities < 1) throw InvalidConfig("num_identities: must be >= 1");
  if (num_identities_b < 0) throw InvalidConfig("num_identities_b: must be >= 0");
  if (cameras_per_domain < 1) throw InvalidConfig("cameras_per_domain: must be >= 1");
  if (images_per_identity_per_camera < 1) throw InvalidConfig("images_per_identity_per_camera: must be >= 1");
  if (image_size < 16) throw InvalidConfig("image_size: must be >= 16");
  validate_style(style_a, "style_a");
  validate_style(style_b, "style_b");
  if (style_a.tag == style_b.tag) throw InvalidConfig("style_b.tag: must differ from style_a.tag");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

DomainStyle style_from_json(const json& j, DomainStyle style, const std::string& prefix) {
  require_known_keys(j, {"tag", "background_low", "background_high", "brightness_offset", "hue_shift_degrees",
                         "noise_level", "cameras"},
                     prefix);
  read_field(j, "tag", style.tag, prefix);
  read_field(j, "background_low", style.background_low, prefix);
  read_field(j, "background_high", style.background_high, prefix);
  read_field(j, "brightness_offset", style.brightness_offset, prefix);
  read_field(j, "hue_shift_degrees", style.hue_shift_degrees, prefix);
  read_field(j, "noise_level", style.noise_level, prefix);
  if (j.contains("cameras")) {
    if (!j["cameras"].is_array()) throw InvalidConfig(prefix + ".cameras: expected an array");
    style.cameras.clear();
    for (size_t i = 0; i < j["cameras"].size(); ++i) {
      const std::string p = prefix + ".cameras[" + std::to_string(i) + "]";
      const json& cj = j["cameras"][i];
      require_known_keys(cj, {"brightness_offset", "hue_shift_degrees", "background_tint"}, p);
      CameraStyle cam;
      read_field(cj, "brightness_offset", cam.brightness_offset, p);
      read_field(cj, "hue_shift_degrees", cam.hue_shift_degrees, p);
      read_field(cj, "background_tint", cam.background_tint, p);
      style.cameras.push_back(cam);
    }
  }
  return style;
}

json style_to_json(const DomainStyle& s) {
  json cams = json::array();
  for (const auto& c : s.cameras) {
    cams.push_back({{"brightness_offset", c.brightness_offset},
                    {"hue_shift_degrees", c.hue_shift_degrees},
                    {"background_tint", c.background_tint}});
  }
  return {{"tag", s.tag},
          {"background_low", s.background_low},
          {"background_high", s.background_high},
          {"brightness_offset", s.brightness_offset},
          {"hue_shift_degrees", s.hue_shift_degrees},
          {"noise_level", s.noise_level},
          {"cameras", cams}};
}

}  // namespace

SynthConfig parse_synth_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidConfig(std::string("config: not valid JSON (") + e.what() + ")");
  }
  require_known_keys(j, {"schema_version", "num_identities", "num_identities_b", "cameras_per_domain",
                         "images_per_identity_per_camera", "image_size", "shared_identities", "style_a", "style_b",
                         "seed"},
                     "");
  int version = kSynthSchemaVersion;
  read_field(j, "schema_version", version, "");
  if (version != kSynthSchemaVersion) throw InvalidConfig("schema_version: unsupported value " + std::to_string(version));
  SynthConfig c;
  read_field(j, "num_identities", c.num_identities, "");
  read_field(j, "num_identities_b", c.num_identities_b, "");
  read_field(j, "cameras_per_domain", c.cameras_per_domain, "");
  read_field(j, "images_per_identity_per_camera", c.images_per_identity_per_camera, "");
  read_field(j, "image_size", c.image_size, "");
  read_field(j, "shared_identities", c.shared_identities, "");
  read_field(j, "seed", c.seed, "");
  if (j.contains("style_a")) c.style_a = style_from_json(j["style_a"], c.style_a, "style_a");
  if (j.contains("style_b")) c.style_b = style_from_json(j["style_b"], c.style_b, "style_b");
  c.validate();
  return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_config(ss.str());
}

std::string synth_config_to_json(const SynthConfig& c) {
  json j = {{"schema_version", kSynthSchemaVersion},
            {"num_identities", c.num_identities},
            {"num_identities_b", c.num_identities_b},
            {"cameras_per_domain", c.cameras_per_domain},
            {"images_per_identity_per_camera", c.images_per_identity_per_camera},
            {"image_size", c.image_size},
            {"shared_identities", c.shared_identities},
            {"style_a", style_to_json(c.style_a)},
            {"style_b", style_to_json(c.style_b)},
            {"seed", c.seed}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double x = c * (1 - std::abs(std::fmod(h / 60.0, 2.0) - 1));
  const double m = v - c;
  Rgb rgb{};
  const int sector = static_cast<int>(h / 60.0) % 6;
  switch (sector) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

/// Fixed appearance signature of one identity.
struct Figure {
  Rgb upper, lower, skin, hair, stripe, shoes;
  bool has_stripe = false;
  double width_factor = 1.0;
  double height_factor = 1.0;
};

Figure make_figure(std::uint64_t seed, int global_identity) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(global_identity) + 0x5151));
  Figure f;
  f.upper = hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.45, 0.9), rng.uniform(0.45, 0.95));
  f.lower = hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.3, 0.85), rng.uniform(0.3, 0.85));
  static const Rgb skins[] = {{0.96, 0.80, 0.69}, {0.87, 0.67, 0.52}, {0.68, 0.49, 0.36}, {0.45, 0.32, 0.24}};
  f.skin = skins[rng.index(4)];
  const double hair_v = rng.uniform(0.2, 0.6);
  f.hair = {hair_v, hair_v * 0.8, hair_v * 0.6};
  f.has_stripe = rng.coin(0.5);
  f.stripe = hsv_to_rgb(rng.uniform(0, 360), rng.uniform(0.2, 0.9), rng.uniform(0.5, 1.0));
  f.shoes = {0.25, 0.22, 0.2};
  f.width_factor = rng.uniform(0.85, 1.15);
  f.height_factor = rng.uniform(0.9, 1.0);
  return f;
}

struct Canvas {
  int size;
  std::vector<Rgb> pixels;
  std::vector<std::uint8_t> mask;
  Canvas(int s, const Rgb& fill) : size(s), pixels(static_cast<size_t>(s) * s, fill), mask(static_cast<size_t>(s) * s, 0) {}

  void fill_rect(double x0, double y0, double x1, double y1, const Rgb& c) {
    for (int y = 0; y < size; ++y) {
      const double py = y + 0.5;
      if (py < y0 || py >= y1) continue;
      for (int x = 0; x < size; ++x) {
        const double px = x + 0.5;
        if (px < x0 || px >= x1) continue;
        pixels[static_cast<size_t>(y) * size + x] = c;
        mask[static_cast<size_t>(y) * size + x] = 1;
      }
    }
  }

  /// Filled disc; pixels above `split_y` get `top` instead of `c`.
  void fill_disc(double cx, double cy, double r, const Rgb& c, double split_y, const Rgb& top) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        if (dx * dx + dy * dy > r * r) continue;
        pixels[static_cast<size_t>(y) * size + x] = (y + 0.5 < split_y) ? top : c;
        mask[static_cast<size_t>(y) * size + x] = 1;
      }
    }
  }
};

void draw_figure(Canvas& canvas, const Figure& f, double cx, double top, double height) {
  const double h = height * f.height_factor;
  const double half_torso = 0.13 * h * f.width_factor;
  const double head_r = 0.075 * h;
  const double head_cy = top + 0.09 * h;
  canvas.fill_disc(cx, head_cy, head_r, f.skin, head_cy - 0.35 * head_r, f.hair);
  // torso and arms
  canvas.fill_rect(cx - half_torso, top + 0.17 * h, cx + half_torso, top + 0.53 * h, f.upper);
  const Rgb sleeve{f.upper[0] * 0.8, f.upper[1] * 0.8, f.upper[2] * 0.8};
  canvas.fill_rect(cx - half_torso - 0.05 * h, top + 0.18 * h, cx - half_torso, top + 0.48 * h, sleeve);
  canvas.fill_rect(cx + half_torso, top + 0.18 * h, cx + half_torso + 0.05 * h, top + 0.48 * h, sleeve);
  if (f.has_stripe) canvas.fill_rect(cx - half_torso, top + 0.30 * h, cx + half_torso, top + 0.37 * h, f.stripe);
  // legs and shoes
  const double half_leg_span = 0.11 * h * f.width_factor;
  const double gap = 0.012 * h;
  canvas.fill_rect(cx - half_leg_span, top + 0.53 * h, cx - gap, top + 0.94 * h, f.lower);
  canvas.fill_rect(cx + gap, top + 0.53 * h, cx + half_leg_span, top + 0.94 * h, f.lower);
  canvas.fill_rect(cx - half_leg_span, top + 0.94 * h, cx - gap, top + h, f.shoes);
  canvas.fill_rect(cx + gap, top + 0.94 * h, cx + half_leg_span, top + h, f.shoes);
}

/// Rotates chroma in YIQ space by `degrees`.
Rgb shift_hue(const Rgb& c, double degrees) {
  if (degrees == 0.0) return c;
  const double yy = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
  const double ii = 0.596 * c[0] - 0.274 * c[1] - 0.322 * c[2];
  const double qq = 0.211 * c[0] - 0.523 * c[1] + 0.312 * c[2];
  const double a = degrees * std::numbers::pi / 180.0;
  const double i2 = ii * std::cos(a) - qq * std::sin(a);
  const double q2 = ii * std::sin(a) + qq * std::cos(a);
  return {yy + 0.956 * i2 + 0.621 * q2, yy - 0.272 * i2 - 0.647 * q2, yy - 1.106 * i2 + 1.703 * q2};
}

struct RenderedImage {
  ImageTensor<float> image;
  ForegroundMask<float> mask;
};

RenderedImage render(const SynthConfig& cfg, const DomainStyle& style, int camera, const Figure& figure,
                     std::uint64_t image_seed) {
  Rng rng(image_seed);
  const int s = cfg.image_size;
  CameraStyle cam;
  if (camera - 1 < static_cast<int>(style.cameras.size())) cam = style.cameras[static_cast<size_t>(camera - 1)];

  Rgb bg;
  for (int c = 0; c < 3; ++c) {
    bg[c] = std::clamp(rng.uniform(style.background_low[c], style.background_high[c]) + cam.background_tint[c], 0.0, 1.0);
  }
  Canvas canvas(s, bg);
  // ground band
  const int ground = static_cast<int>(std::lround(0.78 * s));
  for (int y = ground; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      auto& p = canvas.pixels[static_cast<size_t>(y) * s + x];
      for (int c = 0; c < 3; ++c) p[c] *= 0.8;
    }
  }
  const double scale = rng.uniform(0.95, 1.05);
  const double height = 0.86 * s * scale;
  const double cx = s * (0.5 + rng.uniform(-0.05, 0.05));
  const double top = (s - height) * 0.5 + s * rng.uniform(-0.02, 0.02);
  draw_figure(canvas, figure, cx, top, height);

  const double hue = style.hue_shift_degrees + cam.hue_shift_degrees;
  const double brightness = style.brightness_offset + cam.brightness_offset;
  Raster raster;
  raster.height = s;
  raster.width = s;
  raster.channels = 3;
  raster.pixels.resize(static_cast<size_t>(s) * s * 3);
  ForegroundMask<float> mask(s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const size_t idx = static_cast<size_t>(y) * s + x;
      Rgb p = shift_hue(canvas.pixels[idx], hue);
      for (int c = 0; c < 3; ++c) {
        double v = p[c] + brightness;
        if (style.noise_level > 0) v += rng.normal(0.0, style.noise_level);
        v = std::clamp(v, 0.0, 1.0);
        raster.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
      mask.weights(y, x) = canvas.mask[idx] ? 1.0f : 0.0f;
    }
  }
  return {to_tensor(raster), std::move(mask)};
}

std::string market_name(int pid, int camera, int frame) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d_c%ds1_%06d_00.png", pid, camera, frame);
  return buf;
}

SynthDomain render_domain(const SynthConfig& cfg, const DomainStyle& style, int domain_index, int num_ids,
                          int id_offset) {
  SynthDomain out;
  out.manifest.name = style.tag;
  out.manifest.domain_tag = style.tag;
  for (int i = 0; i < num_ids; ++i) {
    const int global_id = id_offset + i;
    const Figure figure = make_figure(cfg.seed, global_id);
    for (int cam = 1; cam <= cfg.cameras_per_domain; ++cam) {
      for (int j = 0; j < cfg.images_per_identity_per_camera; ++j) {
        std::uint64_t image_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(domain_index));
        image_seed = mix_seed(image_seed, static_cast<std::uint64_t>(global_id));
        image_seed = mix_seed(image_seed, static_cast<std::uint64_t>(cam * 10007 + j));
        RenderedImage r = render(cfg, style, cam, figure, image_seed);
        PersonRecord rec;
        rec.image_path = market_name(global_id + 1, cam, j * 25 + 1);
        rec.person_id = [&] {
          char buf[16];
          std::snprintf(buf, sizeof(buf), "%04d", global_id + 1);
          return std::string(buf);
        }();
        rec.camera_id = cam;
        out.manifest.records.push_back(std::move(rec));
        out.images.push_back(std::move(r.image));
        out.masks.push_back(std::move(r.mask));
      }
    }
  }
  return out;
}

}  // namespace

SynthOutput synth_generate(const SynthConfig& config) {
  config.validate();
  SynthOutput out;
  out.a = render_domain(config, config.style_a, 0, config.num_identities, 0);
  const int b_offset = config.shared_identities ? 0 : 1000 * ((config.num_identities + 999) / 1000);
  out.b = render_domain(config, config.style_b, 1, config.identities_b(), b_offset);
  return out;
}

void materialize(SynthDomain& domain, const std::filesystem::path& root) {
  const std::filesystem::path dir = root / domain.manifest.domain_tag;
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  for (size_t i = 0; i < domain.manifest.records.size(); ++i) {
    auto& rec = domain.manifest.records[i];
    const std::string name = std::filesystem::path(rec.image_path).filename().string();
    const auto image_path = std::filesystem::absolute(dir / "images" / name).lexically_normal();
    const auto mask_path = std::filesystem::absolute(dir / "masks" / name).lexically_normal();
    save_image(image_path, domain.images[i]);
    write_mask_file(mask_path, domain.masks[i]);
    rec.image_path = image_path.string();
    rec.mask_path = mask_path.string();
  }
  save_manifest(domain.manifest, dir / "manifest.jsonl");
}

}  // namespace ptgan
