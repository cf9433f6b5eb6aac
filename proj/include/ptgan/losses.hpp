#pragma once

#include <cmath>
#include <span>
#include <string>

#include "ptgan/model.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan {

enum class AdversarialTarget { real, fake };
enum class AdversarialForm { least_squares, cross_entropy };

/// How the masked identity difference is reduced per image.
enum class IdentityNorm {
  per_pixel,          // ||D * M||_F / (H * W)
  unnormalized,       // ||D * M||_F
  squared_per_pixel,  // ||D * M||_F^2 / (H * W)
};

std::string to_string(AdversarialForm form);
AdversarialForm adversarial_form_from_string(const std::string& s);
std::string to_string(IdentityNorm norm);
IdentityNorm identity_norm_from_string(const std::string& s);

/// Loss terms of one generator-side evaluation. Adversarial terms follow the
/// generator convention (fakes scored against the "real" target).
struct LossBreakdown {
  double l_gan_AtoB = 0.0;
  double l_gan_BtoA = 0.0;
  double l_cyc = 0.0;
  double l_id = 0.0;
  double l_style = 0.0;
  double l_total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// Checks l_style = gan + gan + lambda2 * cyc and l_total = l_style + lambda1 * id
/// to `rel_tol` relative.
bool recomposition_holds(const LossBreakdown& b, double rel_tol = 1e-6);

// ---------------------------------------------------------------------------
// Adversarial

template <typename Scalar>
Scalar adversarial_loss(const Tensor<Scalar>& scores, AdversarialTarget target, AdversarialForm form) {
  if (!scores.data.allFinite()) throw NonFiniteScores("discriminator produced non-finite scores");
  if (scores.size() == 0) throw ShapeMismatch("empty score grid");
  const Scalar t = target == AdversarialTarget::real ? Scalar(1) : Scalar(0);
  const auto s = scores.data.array();
  if (form == AdversarialForm::least_squares) return (s - t).square().mean();
  // scores are logits: softplus(s) - t * s, written in overflow-safe form
  const auto softplus = s.max(Scalar(0)) + (-s.abs()).exp().log1p();
  return (softplus - t * s).mean();
}

/// d(adversarial_loss)/d(scores).
template <typename Scalar>
Tensor<Scalar> adversarial_loss_grad(const Tensor<Scalar>& scores, AdversarialTarget target, AdversarialForm form) {
  const Scalar t = target == AdversarialTarget::real ? Scalar(1) : Scalar(0);
  const Scalar n = static_cast<Scalar>(scores.size());
  Tensor<Scalar> g = scores;
  if (form == AdversarialForm::least_squares) {
    g.data = (scores.data.array() - t) * (Scalar(2) / n);
  } else {
    g.data = ((Scalar(1) / (Scalar(1) + (-scores.data.array()).exp())) - t) / n;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Cycle consistency

template <typename Scalar>
Scalar mean_abs_difference(const Tensor<Scalar>& x, const Tensor<Scalar>& y) {
  require_same_shape(x, y, "mean_abs_difference");
  return (x.data - y.data).array().abs().mean();
}

/// d mean|recon - x| / d recon.
template <typename Scalar>
Tensor<Scalar> mean_abs_difference_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& recon) {
  Tensor<Scalar> g = recon;
  g.data = (recon.data - x.data).array().sign() / static_cast<Scalar>(recon.size());
  return g;
}

/// Batch mean of |a - G_bar(G(a))| plus batch mean of |b - G(G_bar(b))|.
template <typename Scalar>
Scalar cycle_loss(std::span<const Tensor<Scalar>> a, std::span<const Tensor<Scalar>> recon_a,
                  std::span<const Tensor<Scalar>> b, std::span<const Tensor<Scalar>> recon_b) {
  if (a.size() != recon_a.size() || b.size() != recon_b.size() || a.empty() || b.empty()) {
    throw ShapeMismatch("cycle_loss batch sizes differ");
  }
  Scalar sum_a = 0, sum_b = 0;
  for (size_t i = 0; i < a.size(); ++i) sum_a += mean_abs_difference(a[i], recon_a[i]);
  for (size_t i = 0; i < b.size(); ++i) sum_b += mean_abs_difference(b[i], recon_b[i]);
  return sum_a / static_cast<Scalar>(a.size()) + sum_b / static_cast<Scalar>(b.size());
}

// ---------------------------------------------------------------------------
// Identity (foreground-masked)

/// Per-image identity term for one direction.
template <typename Scalar>
Scalar identity_term(const Tensor<Scalar>& source, const Tensor<Scalar>& transferred,
                     const ForegroundMask<Scalar>& mask, IdentityNorm norm) {
  require_same_shape(source, transferred, "identity_loss");
  require_mask_matches(source, mask, "identity_loss");
  Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> m(mask.weights.data(), mask.weights.size());
  const Scalar sq = ((transferred.data - source.data).array().rowwise() * m.array()).square().sum();
  const Scalar pixels = static_cast<Scalar>(source.plane());
  switch (norm) {
    case IdentityNorm::per_pixel: return std::sqrt(sq) / pixels;
    case IdentityNorm::unnormalized: return std::sqrt(sq);
    case IdentityNorm::squared_per_pixel: return sq / pixels;
  }
  return 0;
}

/// d identity_term / d transferred. Zero where the norm vanishes.
template <typename Scalar>
Tensor<Scalar> identity_term_grad(const Tensor<Scalar>& source, const Tensor<Scalar>& transferred,
                                  const ForegroundMask<Scalar>& mask, IdentityNorm norm) {
  Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> m(mask.weights.data(), mask.weights.size());
  Tensor<Scalar> g = transferred;
  g.data = (transferred.data - source.data).array().rowwise() * m.array().square();
  const Scalar sq = ((transferred.data - source.data).array().rowwise() * m.array()).square().sum();
  const Scalar pixels = static_cast<Scalar>(source.plane());
  Scalar scale = 0;
  switch (norm) {
    case IdentityNorm::per_pixel: scale = sq > 0 ? Scalar(1) / (std::sqrt(sq) * pixels) : Scalar(0); break;
    case IdentityNorm::unnormalized: scale = sq > 0 ? Scalar(1) / std::sqrt(sq) : Scalar(0); break;
    case IdentityNorm::squared_per_pixel: scale = Scalar(2) / pixels; break;
  }
  g.data *= scale;
  return g;
}

/// Batch mean of ||(G(a) - a) * M(a)|| plus batch mean of ||(G_bar(b) - b) * M(b)||.
template <typename Scalar>
Scalar identity_loss(std::span<const Tensor<Scalar>> a, std::span<const Tensor<Scalar>> transferred_a,
                     std::span<const ForegroundMask<Scalar>> mask_a, std::span<const Tensor<Scalar>> b,
                     std::span<const Tensor<Scalar>> transferred_b, std::span<const ForegroundMask<Scalar>> mask_b,
                     IdentityNorm norm = IdentityNorm::per_pixel) {
  if (a.size() != transferred_a.size() || a.size() != mask_a.size() || b.size() != transferred_b.size() ||
      b.size() != mask_b.size() || a.empty() || b.empty()) {
    throw ShapeMismatch("identity_loss batch sizes differ");
  }
  Scalar sum_a = 0, sum_b = 0;
  for (size_t i = 0; i < a.size(); ++i) sum_a += identity_term(a[i], transferred_a[i], mask_a[i], norm);
  for (size_t i = 0; i < b.size(); ++i) sum_b += identity_term(b[i], transferred_b[i], mask_b[i], norm);
  return sum_a / static_cast<Scalar>(a.size()) + sum_b / static_cast<Scalar>(b.size());
}

// ---------------------------------------------------------------------------
// Full objectives

struct LossSettings {
  double lambda1 = 10.0;
  double lambda2 = 10.0;
  AdversarialForm form = AdversarialForm::least_squares;
  IdentityNorm identity_norm = IdentityNorm::per_pixel;
};

/// Outputs of the generator-side forward pass, kept for the discriminator update.
template <typename Scalar>
struct GeneratedImages {
  std::vector<Tensor<Scalar>> fake_b;  // G(a)
  std::vector<Tensor<Scalar>> fake_a;  // G_bar(b)
};

namespace detail {

template <typename Scalar>
void check_batches(std::span<const Tensor<Scalar>> batch_a, std::span<const Tensor<Scalar>> batch_b) {
  if (batch_a.empty() || batch_b.empty()) throw ShapeMismatch("empty batch");
  if (batch_a.size() != batch_b.size()) {
    throw ShapeMismatch("batches from A and B must have equal size (" + std::to_string(batch_a.size()) + " vs " +
                        std::to_string(batch_b.size()) + ")");
  }
}

}  // namespace detail

/// Evaluates Eq.-1-style total objective on one batch pair. When `accumulate`
/// is true, gradients of l_total are added to every parameter of the model
/// (generators and discriminators alike). Masks may be empty only when
/// lambda1 == 0 and `with_identity` is false.
template <typename Scalar>
LossBreakdown generator_objective(TransferModel<Scalar>& model, std::span<const Tensor<Scalar>> batch_a,
                                  std::span<const Tensor<Scalar>> batch_b,
                                  std::span<const ForegroundMask<Scalar>> masks_a,
                                  std::span<const ForegroundMask<Scalar>> masks_b, const LossSettings& settings,
                                  bool with_identity, bool accumulate, GeneratedImages<Scalar>* generated = nullptr) {
  detail::check_batches(batch_a, batch_b);
  if (with_identity && (masks_a.size() != batch_a.size() || masks_b.size() != batch_b.size())) {
    throw ShapeMismatch("one mask required per image");
  }
  const size_t n = batch_a.size();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  const Scalar lambda1 = static_cast<Scalar>(settings.lambda1);
  const Scalar lambda2 = static_cast<Scalar>(settings.lambda2);
  double gan_ab = 0, gan_ba = 0, cyc = 0, id = 0;
  if (generated) {
    generated->fake_b.clear();
    generated->fake_a.clear();
  }

  for (size_t i = 0; i < n; ++i) {
    const Tensor<Scalar>& a = batch_a[i];
    const Tensor<Scalar>& b = batch_b[i];
    require_same_shape(a, b, "A/B sample");
    nn::Cache<Scalar> c_ga, c_gbar_rec, c_gbar, c_g_rec, c_db, c_da;
    nn::Cache<Scalar>* p_ga = accumulate ? &c_ga : nullptr;
    nn::Cache<Scalar>* p_gbar_rec = accumulate ? &c_gbar_rec : nullptr;
    nn::Cache<Scalar>* p_gbar = accumulate ? &c_gbar : nullptr;
    nn::Cache<Scalar>* p_g_rec = accumulate ? &c_g_rec : nullptr;
    nn::Cache<Scalar>* p_db = accumulate ? &c_db : nullptr;
    nn::Cache<Scalar>* p_da = accumulate ? &c_da : nullptr;

    Tensor<Scalar> fake_b = model.G.forward(a, p_ga);
    Tensor<Scalar> recon_a = model.G_bar.forward(fake_b, p_gbar_rec);
    Tensor<Scalar> fake_a = model.G_bar.forward(b, p_gbar);
    Tensor<Scalar> recon_b = model.G.forward(fake_a, p_g_rec);
    Tensor<Scalar> score_b = model.D_B.forward(fake_b, p_db);
    Tensor<Scalar> score_a = model.D_A.forward(fake_a, p_da);

    gan_ab += adversarial_loss(score_b, AdversarialTarget::real, settings.form);
    gan_ba += adversarial_loss(score_a, AdversarialTarget::real, settings.form);
    cyc += mean_abs_difference(a, recon_a) + mean_abs_difference(b, recon_b);
    if (with_identity) {
      id += identity_term(a, fake_b, masks_a[i], settings.identity_norm) +
            identity_term(b, fake_a, masks_b[i], settings.identity_norm);
    }

    if (accumulate) {
      Tensor<Scalar> d_score_b = adversarial_loss_grad(score_b, AdversarialTarget::real, settings.form);
      d_score_b.data *= inv_n;
      Tensor<Scalar> d_score_a = adversarial_loss_grad(score_a, AdversarialTarget::real, settings.form);
      d_score_a.data *= inv_n;
      Tensor<Scalar> d_fake_b = model.D_B.backward(d_score_b, c_db);
      Tensor<Scalar> d_fake_a = model.D_A.backward(d_score_a, c_da);

      Tensor<Scalar> d_recon_a = mean_abs_difference_grad(a, recon_a);
      d_recon_a.data *= lambda2 * inv_n;
      Tensor<Scalar> d_recon_b = mean_abs_difference_grad(b, recon_b);
      d_recon_b.data *= lambda2 * inv_n;
      d_fake_b.data += model.G_bar.backward(d_recon_a, c_gbar_rec).data;
      d_fake_a.data += model.G.backward(d_recon_b, c_g_rec).data;

      if (with_identity && lambda1 != Scalar(0)) {
        d_fake_b.data += identity_term_grad(a, fake_b, masks_a[i], settings.identity_norm).data * (lambda1 * inv_n);
        d_fake_a.data += identity_term_grad(b, fake_a, masks_b[i], settings.identity_norm).data * (lambda1 * inv_n);
      }
      model.G.backward(d_fake_b, c_ga);
      model.G_bar.backward(d_fake_a, c_gbar);
    }
    if (generated) {
      generated->fake_b.push_back(std::move(fake_b));
      generated->fake_a.push_back(std::move(fake_a));
    }
  }

  LossBreakdown out;
  out.lambda1 = settings.lambda1;
  out.lambda2 = settings.lambda2;
  out.l_gan_AtoB = gan_ab / static_cast<double>(n);
  out.l_gan_BtoA = gan_ba / static_cast<double>(n);
  out.l_cyc = cyc / static_cast<double>(n);
  out.l_id = id / static_cast<double>(n);
  out.l_style = out.l_gan_AtoB + out.l_gan_BtoA + settings.lambda2 * out.l_cyc;
  out.l_total = with_identity ? out.l_style + settings.lambda1 * out.l_id : out.l_style;
  return out;
}

/// Style objective: both adversarial terms plus lambda2 times the cycle term.
/// l_id and l_total are left at zero and l_total mirrors l_style.
template <typename Scalar>
LossBreakdown style_loss(TransferModel<Scalar>& model, std::span<const Tensor<Scalar>> batch_a,
                         std::span<const Tensor<Scalar>> batch_b, double lambda2,
                         AdversarialForm form = AdversarialForm::least_squares) {
  LossSettings s;
  s.lambda1 = 0.0;
  s.lambda2 = lambda2;
  s.form = form;
  return generator_objective<Scalar>(model, batch_a, batch_b, {}, {}, s, false, false);
}

/// Full objective l_style + lambda1 * l_id.
template <typename Scalar>
LossBreakdown total_loss(TransferModel<Scalar>& model, std::span<const Tensor<Scalar>> batch_a,
                         std::span<const Tensor<Scalar>> batch_b, std::span<const ForegroundMask<Scalar>> masks_a,
                         std::span<const ForegroundMask<Scalar>> masks_b, double lambda1, double lambda2,
                         AdversarialForm form = AdversarialForm::least_squares,
                         IdentityNorm identity_norm = IdentityNorm::per_pixel) {
  LossSettings s{lambda1, lambda2, form, identity_norm};
  return generator_objective<Scalar>(model, batch_a, batch_b, masks_a, masks_b, s, true, false);
}

/// Discriminator objective for one domain: 0.5 * (loss(D(real), real) + loss(D(fake), fake)),
/// batch-averaged. Accumulates gradients into the discriminator when requested.
template <typename Scalar>
double discriminator_objective(Discriminator<Scalar>& disc, std::span<const Tensor<Scalar>> real,
                               std::span<const Tensor<Scalar>> fake, AdversarialForm form, bool accumulate) {
  if (real.size() != fake.size() || real.empty()) throw ShapeMismatch("discriminator batch sizes differ");
  const Scalar scale = Scalar(0.5) / static_cast<Scalar>(real.size());
  double total = 0;
  for (size_t i = 0; i < real.size(); ++i) {
    nn::Cache<Scalar> c_real, c_fake;
    Tensor<Scalar> s_real = disc.forward(real[i], accumulate ? &c_real : nullptr);
    Tensor<Scalar> s_fake = disc.forward(fake[i], accumulate ? &c_fake : nullptr);
    total += 0.5 * (adversarial_loss(s_real, AdversarialTarget::real, form) +
                    adversarial_loss(s_fake, AdversarialTarget::fake, form));
    if (accumulate) {
      Tensor<Scalar> g_real = adversarial_loss_grad(s_real, AdversarialTarget::real, form);
      g_real.data *= scale;
      disc.backward(g_real, c_real);
      Tensor<Scalar> g_fake = adversarial_loss_grad(s_fake, AdversarialTarget::fake, form);
      g_fake.data *= scale;
      disc.backward(g_fake, c_fake);
    }
  }
  return total / static_cast<double>(real.size());
}

}  // namespace ptgan
