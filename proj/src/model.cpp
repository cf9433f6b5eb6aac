#include "ptgan/model.hpp"

#include <algorithm>
#include <cmath>

#include "ptgan/losses.hpp"

namespace ptgan {

void GeneratorSpec::validate() const {
  if (input_size <= 0 || input_size % 4 != 0) {
    throw InvalidSpec("generator input_size " + std::to_string(input_size) + " must be a positive multiple of 4");
  }
  if (input_channels != 1 && input_channels != 3) throw InvalidSpec("generator input_channels must be 1 or 3");
  if (base_channels < 1) throw InvalidSpec("generator base_channels must be >= 1");
  if (num_residual_blocks < 1) throw InvalidSpec("generator num_residual_blocks must be >= 1");
}

void DiscriminatorSpec::validate() const {
  if (input_channels != 1 && input_channels != 3) throw InvalidSpec("discriminator input_channels must be 1 or 3");
  if (base_channels < 1) throw InvalidSpec("discriminator base_channels must be >= 1");
  if (num_downsampling < 1) throw InvalidSpec("discriminator num_downsampling must be >= 1");
  const auto stack = discriminator_stack(*this);
  const int rf = receptive_field(stack);
  if (rf != patch_receptive_field) {
    throw InvalidSpec("discriminator stack has receptive field " + std::to_string(rf) + ", spec declares " +
                      std::to_string(patch_receptive_field));
  }
}

int receptive_field(std::span<const KernelStride> stack) {
  int r = 1;
  for (auto it = stack.rbegin(); it != stack.rend(); ++it) r = (r - 1) * it->stride + it->kernel;
  return r;
}

std::vector<KernelStride> discriminator_stack(const DiscriminatorSpec& spec) {
  std::vector<KernelStride> stack;
  for (int i = 0; i < spec.num_downsampling; ++i) stack.push_back({4, 2});
  stack.push_back({4, 1});
  stack.push_back({4, 1});
  return stack;
}

int discriminator_grid_size(const DiscriminatorSpec& spec, int input_size) {
  int n = input_size;
  for (const auto& l : discriminator_stack(spec)) n = (n + 2 - l.kernel) / l.stride + 1;
  return n;
}

// ---------------------------------------------------------------------------

std::string to_string(AdversarialForm form) {
  return form == AdversarialForm::least_squares ? "least_squares" : "cross_entropy";
}

AdversarialForm adversarial_form_from_string(const std::string& s) {
  if (s == "least_squares") return AdversarialForm::least_squares;
  if (s == "cross_entropy") return AdversarialForm::cross_entropy;
  throw InvalidConfig("unknown adversarial form '" + s + "'");
}

std::string to_string(IdentityNorm norm) {
  switch (norm) {
    case IdentityNorm::per_pixel: return "per_pixel";
    case IdentityNorm::unnormalized: return "unnormalized";
    case IdentityNorm::squared_per_pixel: return "squared_per_pixel";
  }
  return "per_pixel";
}

IdentityNorm identity_norm_from_string(const std::string& s) {
  if (s == "per_pixel") return IdentityNorm::per_pixel;
  if (s == "unnormalized") return IdentityNorm::unnormalized;
  if (s == "squared_per_pixel") return IdentityNorm::squared_per_pixel;
  throw InvalidConfig("unknown identity norm '" + s + "'");
}

namespace {
bool close_rel(double x, double y, double tol) {
  return std::abs(x - y) <= tol * std::max({std::abs(x), std::abs(y), 1e-12});
}
}  // namespace

bool recomposition_holds(const LossBreakdown& b, double rel_tol) {
  const double style = b.l_gan_AtoB + b.l_gan_BtoA + b.lambda2 * b.l_cyc;
  const double total = b.l_style + b.lambda1 * b.l_id;
  return close_rel(b.l_style, style, rel_tol) && close_rel(b.l_total, total, rel_tol);
}

}  // namespace ptgan
