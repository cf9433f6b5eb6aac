#include "ptgan/training.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ptgan/image_io.hpp"
#include "json_fields.hpp"

namespace ptgan {

using nlohmann::json;
using detail::read_field;

namespace {

constexpr int kTrainSchemaVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[8] = {'P', 'T', 'G', 'A', 'N', 'C', 'K', 'P'};
constexpr char kCheckpointEnd[8] = {'P', 'T', 'G', 'A', 'N', 'E', 'N', 'D'};

json loss_to_json(const LossBreakdown& b) {
  return {{"l_gan_AtoB", b.l_gan_AtoB}, {"l_gan_BtoA", b.l_gan_BtoA}, {"l_cyc", b.l_cyc},   {"l_id", b.l_id},
          {"l_style", b.l_style},       {"l_total", b.l_total},       {"lambda1", b.lambda1}, {"lambda2", b.lambda2}};
}

LossBreakdown loss_from_json(const json& j) {
  LossBreakdown b;
  b.l_gan_AtoB = j.at("l_gan_AtoB").get<double>();
  b.l_gan_BtoA = j.at("l_gan_BtoA").get<double>();
  b.l_cyc = j.at("l_cyc").get<double>();
  b.l_id = j.at("l_id").get<double>();
  b.l_style = j.at("l_style").get<double>();
  b.l_total = j.at("l_total").get<double>();
  b.lambda1 = j.at("lambda1").get<double>();
  b.lambda2 = j.at("lambda2").get<double>();
  return b;
}

json config_to_json(const TrainConfig& c) {
  return {{"schema_version", kTrainSchemaVersion},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"lr_generator", c.lr_generator},
          {"lr_discriminator", c.lr_discriminator},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"image_size", c.image_size},
          {"history_buffer_size", c.history_buffer_size},
          {"seed", c.seed},
          {"adversarial_form", to_string(c.adversarial_form)},
          {"identity_norm", to_string(c.identity_norm)},
          {"linear_decay", c.linear_decay},
          {"strict_paper", c.strict_paper},
          {"checkpoint_interval", c.checkpoint_interval},
          {"base_channels", c.base_channels},
          {"num_residual_blocks", c.num_residual_blocks},
          {"discriminator_channels", c.discriminator_channels},
          {"mask_source",
           {{"kind", to_string(c.mask_source.kind)},
            {"center_x", c.mask_source.prior.center_x},
            {"center_y", c.mask_source.prior.center_y},
            {"radius_x", c.mask_source.prior.radius_x},
            {"radius_y", c.mask_source.prior.radius_y},
            {"border", c.mask_source.prior.border}}}};
}

TrainConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "schema_version", "lambda1",        "lambda2",      "lr_generator",        "lr_discriminator",
      "adam_beta1",     "adam_beta2",     "epochs",       "batch_size",          "image_size",
      "history_buffer_size", "seed",      "adversarial_form", "identity_norm",   "linear_decay",
      "strict_paper",   "checkpoint_interval", "base_channels", "num_residual_blocks", "discriminator_channels",
      "mask_source"};
  if (!j.is_object()) throw InvalidConfig("config: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw InvalidConfig(key + ": unknown field");
  }
  int version = kTrainSchemaVersion;
  read_field(j, "schema_version", version);
  if (version != kTrainSchemaVersion) throw InvalidConfig("schema_version: unsupported value " + std::to_string(version));
  TrainConfig c;
  read_field(j, "lambda1", c.lambda1);
  read_field(j, "lambda2", c.lambda2);
  read_field(j, "lr_generator", c.lr_generator);
  read_field(j, "lr_discriminator", c.lr_discriminator);
  read_field(j, "adam_beta1", c.adam_beta1);
  read_field(j, "adam_beta2", c.adam_beta2);
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "image_size", c.image_size);
  read_field(j, "history_buffer_size", c.history_buffer_size);
  read_field(j, "seed", c.seed);
  if (j.contains("adversarial_form")) {
    std::string s;
    read_field(j, "adversarial_form", s);
    c.adversarial_form = adversarial_form_from_string(s);
  }
  if (j.contains("identity_norm")) {
    std::string s;
    read_field(j, "identity_norm", s);
    c.identity_norm = identity_norm_from_string(s);
  }
  read_field(j, "linear_decay", c.linear_decay);
  read_field(j, "strict_paper", c.strict_paper);
  read_field(j, "checkpoint_interval", c.checkpoint_interval);
  read_field(j, "base_channels", c.base_channels);
  read_field(j, "num_residual_blocks", c.num_residual_blocks);
  read_field(j, "discriminator_channels", c.discriminator_channels);
  if (j.contains("mask_source")) {
    const json& m = j["mask_source"];
    if (!m.is_object()) throw InvalidConfig("mask_source: expected an object");
    for (const auto& [key, _] : m.items()) {
      static const std::set<std::string> mk = {"kind", "center_x", "center_y", "radius_x", "radius_y", "border"};
      if (!mk.count(key)) throw InvalidConfig("mask_source." + key + ": unknown field");
    }
    std::string kind = to_string(c.mask_source.kind);
    read_field(m, "kind", kind, "mask_source");
    c.mask_source.kind = mask_kind_from_string(kind);
    read_field(m, "center_x", c.mask_source.prior.center_x, "mask_source");
    read_field(m, "center_y", c.mask_source.prior.center_y, "mask_source");
    read_field(m, "radius_x", c.mask_source.prior.radius_x, "mask_source");
    read_field(m, "radius_y", c.mask_source.prior.radius_y, "mask_source");
    read_field(m, "border", c.mask_source.prior.border, "mask_source");
  }
  return c;
}

}  // namespace

GeneratorSpec TrainConfig::generator_spec() const {
  return GeneratorSpec{image_size, 3, base_channels, num_residual_blocks};
}

DiscriminatorSpec TrainConfig::discriminator_spec() const {
  return DiscriminatorSpec{3, discriminator_channels, 3, 70};
}

LossSettings TrainConfig::loss_settings() const { return {lambda1, lambda2, adversarial_form, identity_norm}; }

void TrainConfig::validate() const {
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) throw InvalidConfig("lambda1: must be a finite value >= 0");
  if (!(lambda2 >= 0.0) || !std::isfinite(lambda2)) throw InvalidConfig("lambda2: must be a finite value >= 0");
  if (!(lr_generator > 0.0)) throw InvalidConfig("lr_generator: must be > 0");
  if (!(lr_discriminator > 0.0)) throw InvalidConfig("lr_discriminator: must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw InvalidConfig("adam_beta1: must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw InvalidConfig("adam_beta2: must lie in [0, 1)");
  if (epochs < 1) throw InvalidConfig("epochs: must be >= 1");
  if (batch_size < 1) throw InvalidConfig("batch_size: must be >= 1");
  if (image_size < 16 || image_size % 4 != 0) throw InvalidConfig("image_size: must be a multiple of 4 and >= 16");
  if (history_buffer_size < 0) throw InvalidConfig("history_buffer_size: must be >= 0");
  if (checkpoint_interval < 1) throw InvalidConfig("checkpoint_interval: must be >= 1");
  if (base_channels < 1) throw InvalidConfig("base_channels: must be >= 1");
  if (num_residual_blocks < 1) throw InvalidConfig("num_residual_blocks: must be >= 1");
  if (discriminator_channels < 1) throw InvalidConfig("discriminator_channels: must be >= 1");
  if (strict_paper) {
    if (history_buffer_size != 0) {
      throw InvalidConfig("history_buffer_size: strict_paper mode forbids a replay buffer (set it to 0)");
    }
    if (linear_decay) throw InvalidConfig("linear_decay: strict_paper mode uses constant learning rates");
  }
  // image_size below 70 still works; the patch grid just shrinks
  if (discriminator_grid_size(discriminator_spec(), image_size) < 1) {
    throw InvalidConfig("image_size: too small for the 70x70 patch discriminator");
  }
}

TrainConfig parse_train_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidConfig(std::string("config: not valid JSON (") + e.what() + ")");
  }
  TrainConfig c = config_from_json(j);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string train_config_to_json(const TrainConfig& config) { return config_to_json(config).dump(2); }

double lr_factor(const TrainConfig& config, int epoch) {
  if (!config.linear_decay) return 1.0;
  const int start = config.epochs / 2;
  if (epoch < start) return 1.0;
  const int span = config.epochs - start;
  return std::max(0.0, 1.0 - static_cast<double>(epoch - start + 1) / static_cast<double>(span + 1));
}

// ---------------------------------------------------------------------------

DomainData load_domain(const DatasetManifest& manifest, const MaskSource& masks, int image_size, bool need_masks) {
  DomainData d;
  d.tag = manifest.domain_tag;
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& rec : manifest.records) {
    d.images.push_back(load_image(rec.image_path, image_size));
    if (need_masks) d.masks.push_back(mask_for(rec, masks, image_size));
    for (unsigned char ch : rec.image_path) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
  }
  d.fingerprint = h;
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const char* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void put_matrix(const Matrix<float>& m) {
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    put_bytes(reinterpret_cast<const char*>(m.data()), static_cast<size_t>(m.size()) * sizeof(float));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, size_t end) : buf_(buf), end_(end) {}
  template <typename T>
  T get() {
    T v;
    take(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  void take(char* out, size_t n) {
    if (pos_ + n > end_) throw CorruptCheckpoint("checkpoint truncated");
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  void get_matrix(Matrix<float>& m) {
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
      throw CorruptCheckpoint("parameter shape mismatch in checkpoint");
    }
    take(reinterpret_cast<char*>(m.data()), static_cast<size_t>(m.size()) * sizeof(float));
  }
  size_t pos() const { return pos_; }

 private:
  const std::vector<char>& buf_;
  size_t end_;
  size_t pos_ = 0;
};

std::uint64_t fnv1a(const char* p, size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

json info_to_json(const CheckpointInfo& info) {
  json losses = json::array();
  for (const auto& l : info.epoch_mean_losses) losses.push_back(loss_to_json(l));
  return {{"epoch", info.epoch},
          {"step", info.step},
          {"seed", info.config.seed},
          {"config", config_to_json(info.config)},
          {"source_tag", info.source_tag},
          {"target_tag", info.target_tag},
          {"fingerprints", {{"a", info.fingerprint_a}, {"b", info.fingerprint_b}}},
          {"epoch_mean_losses", losses}};
}

CheckpointInfo info_from_json(const json& j) {
  CheckpointInfo info;
  info.epoch = j.at("epoch").get<int>();
  info.step = j.at("step").get<long long>();
  info.config = config_from_json(j.at("config"));
  info.source_tag = j.at("source_tag").get<std::string>();
  info.target_tag = j.at("target_tag").get<std::string>();
  info.fingerprint_a = j.at("fingerprints").at("a").get<std::uint64_t>();
  info.fingerprint_b = j.at("fingerprints").at("b").get<std::uint64_t>();
  for (const auto& l : j.at("epoch_mean_losses")) info.epoch_mean_losses.push_back(loss_from_json(l));
  return info;
}

void put_adam(Writer& w, const AdamState<float>& s) {
  w.put<double>(s.beta1);
  w.put<double>(s.beta2);
  w.put<double>(s.eps);
  w.put<std::int64_t>(s.steps);
  w.put<std::uint64_t>(s.m.size());
  for (size_t i = 0; i < s.m.size(); ++i) {
    w.put_matrix(s.m[i]);
    w.put_matrix(s.v[i]);
  }
}

void get_adam(Reader& r, AdamState<float>& s) {
  s.beta1 = r.get<double>();
  s.beta2 = r.get<double>();
  s.eps = r.get<double>();
  s.steps = r.get<std::int64_t>();
  if (r.get<std::uint64_t>() != s.m.size()) throw CorruptCheckpoint("optimizer state size mismatch");
  for (size_t i = 0; i < s.m.size(); ++i) {
    r.get_matrix(s.m[i]);
    r.get_matrix(s.v[i]);
  }
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const TrainerState<float>& state_in, const CheckpointInfo& info,
                     const std::filesystem::path& path) {
  auto& state = const_cast<TrainerState<float>&>(state_in);
  Writer w;
  w.put_bytes(kCheckpointMagic, 8);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(sizeof(float));
  const std::string header = info_to_json(info).dump();
  w.put<std::uint64_t>(header.size());
  w.put_bytes(header.data(), header.size());
  for (auto* p : state.model.all_parameters()) w.put_matrix(p->value);
  put_adam(w, state.opt_generator);
  put_adam(w, state.opt_discriminator);
  const std::uint64_t hash = fnv1a(w.bytes().data(), w.bytes().size());
  w.put<std::uint64_t>(hash);
  w.put_bytes(kCheckpointEnd, 8);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write checkpoint " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  }
  json sidecar = info_to_json(info);
  sidecar["format"] = "ptgan-checkpoint-sidecar";
  sidecar["format_version"] = kCheckpointVersion;
  sidecar["checkpoint"] = path.filename().string();
  std::ofstream side(sidecar_path(path));
  side << sidecar.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 + 8 + 8 + 16 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0) {
    throw CorruptCheckpoint(path.string() + ": not a checkpoint or truncated");
  }
  std::uint32_t version;
  std::memcpy(&version, buf.data() + 8, sizeof(version));
  if (version != kCheckpointVersion) {
    throw VersionMismatch(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  if (std::memcmp(buf.data() + buf.size() - 8, kCheckpointEnd, 8) != 0) {
    throw CorruptCheckpoint(path.string() + ": missing end marker (truncated?)");
  }
  const size_t body = buf.size() - 16;
  std::uint64_t stored_hash;
  std::memcpy(&stored_hash, buf.data() + body, sizeof(stored_hash));
  if (fnv1a(buf.data(), body) != stored_hash) throw CorruptCheckpoint(path.string() + ": checksum mismatch");

  Reader r(buf, body);
  char magic[8];
  r.take(magic, 8);
  r.get<std::uint32_t>();
  if (r.get<std::uint32_t>() != sizeof(float)) throw VersionMismatch(path.string() + ": scalar type mismatch");
  const auto header_len = r.get<std::uint64_t>();
  if (header_len > body) throw CorruptCheckpoint(path.string() + ": bad header length");
  std::string header(header_len, '\0');
  r.take(header.data(), header_len);
  CheckpointInfo info;
  try {
    info = info_from_json(json::parse(header));
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(path.string() + ": bad header (" + e.what() + ")");
  }
  LoadedCheckpoint out{TrainerState<float>(info.config), info};
  for (auto* p : out.state.model.all_parameters()) r.get_matrix(p->value);
  get_adam(r, out.state.opt_generator);
  get_adam(r, out.state.opt_discriminator);
  if (r.pos() != body) throw CorruptCheckpoint(path.string() + ": trailing bytes");
  out.state.step = info.step;
  out.state.epoch = info.epoch;
  return out;
}

// ---------------------------------------------------------------------------
// Loop

TrainResult train(const DatasetManifest& manifest_a, const DatasetManifest& manifest_b, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (manifest_a.records.empty()) throw DataStarvation("domain A has no training records");
  if (manifest_b.records.empty()) throw DataStarvation("domain B has no training records");
  DomainData a = load_domain(manifest_a, config.mask_source, config.image_size, true);
  DomainData b = load_domain(manifest_b, config.mask_source, config.image_size, true);
  return train_on(a, b, config, options);
}

TrainResult train_on(const DomainData& a, const DomainData& b, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (a.images.empty()) throw DataStarvation("domain A has no training records");
  if (b.images.empty()) throw DataStarvation("domain B has no training records");
  if (a.masks.size() != a.images.size() || b.masks.size() != b.images.size()) {
    throw MissingMask("every training image needs a mask");
  }

  TrainResult result;
  CheckpointInfo& info = result.info;
  info.config = config;
  info.source_tag = a.tag;
  info.target_tag = b.tag;
  info.fingerprint_a = a.fingerprint;
  info.fingerprint_b = b.fingerprint;

  TrainerState<float>& state = result.state;
  if (options.resume_from) {
    LoadedCheckpoint loaded = load_checkpoint(*options.resume_from);
    state = std::move(loaded.state);
    info.epoch_mean_losses = loaded.info.epoch_mean_losses;
    // the resumed run's own config governs the remaining epochs
    state.pool_a = HistoryBuffer<float>(config.history_buffer_size);
    state.pool_b = HistoryBuffer<float>(config.history_buffer_size);
    state.rng = Rng(mix_seed(config.seed, 0xD1CE + static_cast<std::uint64_t>(state.epoch)));
  } else {
    state = TrainerState<float>(config);
  }

  std::ofstream log;
  if (options.write_log && !options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    log.open(options.out_dir / "train_log.jsonl", options.resume_from ? std::ios::app : std::ios::trunc);
    std::ofstream(options.out_dir / "effective_config.json") << train_config_to_json(config) << '\n';
  }

  const size_t per_epoch = std::min(a.images.size(), b.images.size());
  const size_t batch = static_cast<size_t>(config.batch_size);
  for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    Rng order(mix_seed(config.seed, 0xDA7A0000ULL + static_cast<std::uint64_t>(epoch)));
    std::vector<size_t> order_a(a.images.size()), order_b(b.images.size());
    for (size_t i = 0; i < order_a.size(); ++i) order_a[i] = i;
    for (size_t i = 0; i < order_b.size(); ++i) order_b[i] = i;
    order.shuffle(order_a);
    order.shuffle(order_b);

    LossBreakdown sum;
    size_t steps_this_epoch = 0;
    for (size_t start = 0; start < per_epoch; start += batch) {
      const size_t n = std::min(batch, per_epoch - start);
      std::vector<Tensor<float>> ba, bb;
      std::vector<ForegroundMask<float>> ma, mb;
      std::vector<size_t> ia, ib;
      for (size_t k = 0; k < n; ++k) {
        const size_t i = order_a[start + k], j = order_b[start + k];
        ba.push_back(a.images[i]);
        ma.push_back(a.masks[i]);
        bb.push_back(b.images[j]);
        mb.push_back(b.masks[j]);
        ia.push_back(i);
        ib.push_back(j);
      }
      StepLosses losses = train_step<float>(state, ba, bb, ma, mb, config, ia, ib);
      result.history.push_back(losses);
      if (options.on_step) options.on_step(state.step, losses);
      if (log.is_open()) {
        json rec = loss_to_json(losses.generator);
        rec["step"] = state.step;
        rec["epoch"] = epoch;
        rec["d_a"] = losses.discriminator_a;
        rec["d_b"] = losses.discriminator_b;
        log << rec.dump() << '\n';
      }
      sum.l_gan_AtoB += losses.generator.l_gan_AtoB;
      sum.l_gan_BtoA += losses.generator.l_gan_BtoA;
      sum.l_cyc += losses.generator.l_cyc;
      sum.l_id += losses.generator.l_id;
      sum.l_style += losses.generator.l_style;
      sum.l_total += losses.generator.l_total;
      ++steps_this_epoch;
    }
    const double k = 1.0 / static_cast<double>(std::max<size_t>(steps_this_epoch, 1));
    sum.l_gan_AtoB *= k;
    sum.l_gan_BtoA *= k;
    sum.l_cyc *= k;
    sum.l_id *= k;
    sum.l_style *= k;
    sum.l_total *= k;
    sum.lambda1 = config.lambda1;
    sum.lambda2 = config.lambda2;
    info.epoch_mean_losses.push_back(sum);

    state.epoch = epoch + 1;
    info.epoch = state.epoch;
    info.step = state.step;
    const bool last = state.epoch == config.epochs;
    if (!options.out_dir.empty() && (last || state.epoch % config.checkpoint_interval == 0)) {
      std::ostringstream name;
      name << "epoch_" << std::setw(3) << std::setfill('0') << state.epoch << ".ckpt";
      const auto p = options.out_dir / name.str();
      save_checkpoint(state, info, p);
      result.checkpoints.push_back(p);
    }
  }
  if (!options.out_dir.empty()) {
    result.final_checkpoint = options.out_dir / "final.ckpt";
    save_checkpoint(state, info, result.final_checkpoint);
  }
  return result;
}

}  // namespace ptgan
