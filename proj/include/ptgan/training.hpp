#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptgan/adam.hpp"
#include "ptgan/data_model.hpp"
#include "ptgan/losses.hpp"
#include "ptgan/masks.hpp"
#include "ptgan/model.hpp"
#include "ptgan/random.hpp"

namespace ptgan {

struct TrainConfig {
  double lambda1 = 10.0;
  double lambda2 = 10.0;
  double lr_generator = 2e-4;
  double lr_discriminator = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int epochs = 40;
  int batch_size = 1;
  int image_size = 256;
  int history_buffer_size = 50;
  std::uint64_t seed = 0;
  AdversarialForm adversarial_form = AdversarialForm::least_squares;
  IdentityNorm identity_norm = IdentityNorm::per_pixel;
  /// Linear decay to zero over the second half of training; off by default.
  bool linear_decay = false;
  /// Forbids settings the method does not describe (replay buffer, decay).
  bool strict_paper = false;
  /// Write a checkpoint every N epochs (the final epoch is always written).
  int checkpoint_interval = 1;
  int base_channels = 64;
  int num_residual_blocks = 9;
  int discriminator_channels = 64;
  MaskSource mask_source = MaskSource::from_files();

  GeneratorSpec generator_spec() const;
  DiscriminatorSpec discriminator_spec() const;
  LossSettings loss_settings() const;
  /// Throws InvalidConfig naming the offending field.
  void validate() const;
};

/// Parses a JSON config; fields absent from the document keep their defaults.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_to_json(const TrainConfig& config);

// ---------------------------------------------------------------------------

/// Replay pool of generated images shown to the discriminator.
template <typename Scalar>
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity = 0) : capacity_(capacity) {}

  /// Returns the image the discriminator should see for this push.
  Tensor<Scalar> push_sample(const Tensor<Scalar>& generated, Rng& rng) {
    if (capacity_ <= 0) return generated;
    if (static_cast<int>(images_.size()) < capacity_) {
      images_.push_back(generated);
      return generated;
    }
    if (rng.coin(0.5)) {
      const size_t idx = static_cast<size_t>(rng.index(images_.size()));
      Tensor<Scalar> old = std::move(images_[idx]);
      images_[idx] = generated;
      return old;
    }
    return generated;
  }

  size_t size() const { return images_.size(); }
  int capacity() const { return capacity_; }

 private:
  int capacity_;
  std::vector<Tensor<Scalar>> images_;
};

/// Everything the optimizer owns between steps.
template <typename Scalar>
struct TrainerState {
  TransferModel<Scalar> model;
  AdamState<Scalar> opt_generator;
  AdamState<Scalar> opt_discriminator;
  HistoryBuffer<Scalar> pool_a;
  HistoryBuffer<Scalar> pool_b;
  Rng rng;
  long long step = 0;
  int epoch = 0;

  TrainerState() = default;
  explicit TrainerState(const TrainConfig& config)
      : model(config.generator_spec(), config.discriminator_spec(), config.seed),
        pool_a(config.history_buffer_size), pool_b(config.history_buffer_size),
        rng(mix_seed(config.seed, 0xD1CE)) {
    reset_optimizers(config);
  }

  void reset_optimizers(const TrainConfig& config) {
    opt_generator = AdamState<Scalar>(model.generator_parameters(), config.adam_beta1, config.adam_beta2);
    opt_discriminator = AdamState<Scalar>(model.discriminator_parameters(), config.adam_beta1, config.adam_beta2);
  }
};

struct StepLosses {
  LossBreakdown generator;
  double discriminator_a = 0.0;
  double discriminator_b = 0.0;
};

namespace detail {

template <typename Scalar>
double parameter_fingerprint(const std::vector<nn::Parameter<Scalar>*>& params) {
  double acc = 0.0;
  double k = 1.0;
  for (const auto* p : params) {
    acc += k * static_cast<double>(p->value.template cast<double>().sum());
    k += 0.618;
  }
  return acc;
}

inline bool finite(const LossBreakdown& b) {
  return std::isfinite(b.l_gan_AtoB) && std::isfinite(b.l_gan_BtoA) && std::isfinite(b.l_cyc) &&
         std::isfinite(b.l_id) && std::isfinite(b.l_total);
}

inline std::string join_indices(std::span<const size_t> idx) {
  std::string s;
  for (size_t i : idx) s += (s.empty() ? "" : ",") + std::to_string(i);
  return s;
}

}  // namespace detail

/// Learning-rate multiplier for `epoch` (0-based).
double lr_factor(const TrainConfig& config, int epoch);

/// One alternating update: generators first on the full objective, then both
/// discriminators on real images versus replayed fakes. Reported losses are
/// those evaluated before the update.
template <typename Scalar>
StepLosses train_step(TrainerState<Scalar>& state, std::span<const Tensor<Scalar>> batch_a,
                      std::span<const Tensor<Scalar>> batch_b, std::span<const ForegroundMask<Scalar>> masks_a,
                      std::span<const ForegroundMask<Scalar>> masks_b, const TrainConfig& config,
                      std::span<const size_t> indices_a = {}, std::span<const size_t> indices_b = {}) {
  auto& model = state.model;
  auto gen_params = model.generator_parameters();
  auto disc_params = model.discriminator_parameters();
  const double factor = lr_factor(config, state.epoch);
  StepLosses out;

  // (1) generators
  const double disc_before = detail::parameter_fingerprint(disc_params);
  model.zero_grad();
  GeneratedImages<Scalar> generated;
  out.generator = generator_objective(model, batch_a, batch_b, masks_a, masks_b, config.loss_settings(), true, true,
                                      &generated);
  if (!detail::finite(out.generator)) {
    throw NonFiniteLoss("non-finite generator loss at step " + std::to_string(state.step) + " (A indices [" +
                        detail::join_indices(indices_a) + "], B indices [" + detail::join_indices(indices_b) + "])");
  }
  adam_step(gen_params, state.opt_generator, config.lr_generator * factor);
  if (detail::parameter_fingerprint(disc_params) != disc_before) {
    throw std::logic_error("generator update modified discriminator parameters");
  }

  // (2) discriminators
  const double gen_before = detail::parameter_fingerprint(gen_params);
  model.zero_grad();
  std::vector<Tensor<Scalar>> replay_a, replay_b;
  for (auto& f : generated.fake_a) replay_a.push_back(state.pool_a.push_sample(f, state.rng));
  for (auto& f : generated.fake_b) replay_b.push_back(state.pool_b.push_sample(f, state.rng));
  out.discriminator_a = discriminator_objective<Scalar>(model.D_A, batch_a, replay_a, config.adversarial_form, true);
  out.discriminator_b = discriminator_objective<Scalar>(model.D_B, batch_b, replay_b, config.adversarial_form, true);
  if (!std::isfinite(out.discriminator_a) || !std::isfinite(out.discriminator_b)) {
    throw NonFiniteLoss("non-finite discriminator loss at step " + std::to_string(state.step) + " (A indices [" +
                        detail::join_indices(indices_a) + "], B indices [" + detail::join_indices(indices_b) + "])");
  }
  adam_step(disc_params, state.opt_discriminator, config.lr_discriminator * factor);
  if (detail::parameter_fingerprint(gen_params) != gen_before) {
    throw std::logic_error("discriminator update modified generator parameters");
  }
  state.step += 1;
  return out;
}

// ---------------------------------------------------------------------------
// Data

/// Images (and masks, when required) of one domain, held in memory.
struct DomainData {
  std::string tag;
  std::vector<ImageTensor<float>> images;
  std::vector<ForegroundMask<float>> masks;
  std::uint64_t fingerprint = 0;
};

/// Reads only image and mask paths; identity labels are never consulted.
DomainData load_domain(const DatasetManifest& manifest, const MaskSource& masks, int image_size, bool need_masks);

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointInfo {
  int epoch = 0;
  long long step = 0;
  TrainConfig config;
  std::string source_tag;
  std::string target_tag;
  std::uint64_t fingerprint_a = 0;
  std::uint64_t fingerprint_b = 0;
  std::vector<LossBreakdown> epoch_mean_losses;
};

void save_checkpoint(const TrainerState<float>& state, const CheckpointInfo& info, const std::filesystem::path& path);

struct LoadedCheckpoint {
  TrainerState<float> state;
  CheckpointInfo info;
};

/// Throws CorruptCheckpoint on truncation or checksum failure and
/// VersionMismatch on an unknown format version.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Sidecar path: `<checkpoint>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

// ---------------------------------------------------------------------------
// Training loop

struct TrainOptions {
  std::filesystem::path out_dir;
  /// Continue from this checkpoint's parameters, optimizer state and counters.
  std::optional<std::filesystem::path> resume_from;
  /// Called after every step with the step's losses.
  std::function<void(long long step, const StepLosses&)> on_step;
  bool write_log = true;
};

struct TrainResult {
  std::vector<StepLosses> history;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path final_checkpoint;
  TrainerState<float> state;
  CheckpointInfo info;
};

/// Runs config.epochs passes of min(|A|, |B|) steps with independent per-epoch
/// reshuffles of each domain. Domain B is consumed without identity labels.
TrainResult train(const DatasetManifest& manifest_a, const DatasetManifest& manifest_b, const TrainConfig& config,
                  const TrainOptions& options);

/// Same loop over in-memory domains.
TrainResult train_on(const DomainData& a, const DomainData& b, const TrainConfig& config, const TrainOptions& options);

}  // namespace ptgan
