#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ptgan/nn/sequential.hpp"
#include "ptgan/random.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan {

// ---------------------------------------------------------------------------
// Architecture specs

struct GeneratorSpec {
  int input_size = 256;
  int input_channels = 3;
  int base_channels = 64;
  int num_residual_blocks = 9;

  void validate() const;
};

struct DiscriminatorSpec {
  int input_channels = 3;
  int base_channels = 64;
  /// Number of leading stride-2 layers; 3 gives the 70x70 patch classifier.
  int num_downsampling = 3;
  int patch_receptive_field = 70;

  void validate() const;
};

struct KernelStride {
  int kernel;
  int stride;
};

/// Receptive field of one output unit of a conv stack, via r <- (r - 1) * s + k
/// applied from the last layer back to the first.
int receptive_field(std::span<const KernelStride> stack);

/// (kernel, stride) pairs of the patch discriminator stack described by `spec`.
std::vector<KernelStride> discriminator_stack(const DiscriminatorSpec& spec);

/// Spatial size of the discriminator's score grid for a square input.
int discriminator_grid_size(const DiscriminatorSpec& spec, int input_size);

// ---------------------------------------------------------------------------
// Networks

/// Image-to-image mapping: stem, two stride-2 downsamplings, residual blocks,
/// two fractionally-strided upsamplings, tanh output.
template <typename Scalar>
class Generator {
 public:
  Generator() = default;
  explicit Generator(const GeneratorSpec& spec) : spec_(spec) {
    spec.validate();
    using namespace nn;
    const int c = spec.base_channels;
    net_.template add<Conv2d<Scalar>>(spec.input_channels, c, 7, 1, 3, PadMode::reflect, false);
    net_.template add<InstanceNorm<Scalar>>();
    net_.template add<LeakyReLU<Scalar>>(0.0);
    net_.template add<Conv2d<Scalar>>(c, 2 * c, 3, 2, 1, PadMode::zero, false);
    net_.template add<InstanceNorm<Scalar>>();
    net_.template add<LeakyReLU<Scalar>>(0.0);
    net_.template add<Conv2d<Scalar>>(2 * c, 4 * c, 3, 2, 1, PadMode::zero, false);
    net_.template add<InstanceNorm<Scalar>>();
    net_.template add<LeakyReLU<Scalar>>(0.0);
    for (int i = 0; i < spec.num_residual_blocks; ++i) net_.template add<ResidualBlock<Scalar>>(4 * c);
    net_.template add<ConvTranspose2d<Scalar>>(4 * c, 2 * c, 3, 2, 1, 1, false);
    net_.template add<InstanceNorm<Scalar>>();
    net_.template add<LeakyReLU<Scalar>>(0.0);
    net_.template add<ConvTranspose2d<Scalar>>(2 * c, c, 3, 2, 1, 1, false);
    net_.template add<InstanceNorm<Scalar>>();
    net_.template add<LeakyReLU<Scalar>>(0.0);
    net_.template add<Conv2d<Scalar>>(c, spec.input_channels, 7, 1, 3, PadMode::reflect, true);
    net_.template add<Tanh<Scalar>>();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, nn::Cache<Scalar>* cache = nullptr) const {
    if (x.height % 4 != 0 || x.width % 4 != 0 || x.height < 4 || x.width < 4) {
      throw ShapeMismatch("generator input " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                          " not divisible by 4");
    }
    return net_.forward(x, cache);
  }
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return forward(x); }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const nn::Cache<Scalar>& cache) {
    return net_.backward(dy, cache);
  }

  nn::Sequential<Scalar>& network() { return net_; }
  const nn::Sequential<Scalar>& network() const { return net_; }
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  nn::Sequential<Scalar> net_;
};

/// Patch classifier producing one real/fake score per overlapping input patch.
template <typename Scalar>
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(const DiscriminatorSpec& spec) : spec_(spec) {
    spec.validate();
    using namespace nn;
    const int c = spec.base_channels;
    net_.template add<Conv2d<Scalar>>(spec.input_channels, c, 4, 2, 1, PadMode::zero, true);
    net_.template add<LeakyReLU<Scalar>>(0.2);
    int channels = c;
    for (int i = 1; i < spec.num_downsampling; ++i) {
      const int next = c * std::min(1 << i, 8);
      net_.template add<Conv2d<Scalar>>(channels, next, 4, 2, 1, PadMode::zero, false);
      net_.template add<InstanceNorm<Scalar>>();
      net_.template add<LeakyReLU<Scalar>>(0.2);
      channels = next;
    }
    const int next = c * std::min(1 << spec.num_downsampling, 8);
    net_.template add<Conv2d<Scalar>>(channels, next, 4, 1, 1, PadMode::zero, false);
    net_.template add<InstanceNorm<Scalar>>();
    net_.template add<LeakyReLU<Scalar>>(0.2);
    net_.template add<Conv2d<Scalar>>(next, 1, 4, 1, 1, PadMode::zero, true);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, nn::Cache<Scalar>* cache = nullptr) const {
    return net_.forward(x, cache);
  }
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return forward(x); }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const nn::Cache<Scalar>& cache) {
    return net_.backward(dy, cache);
  }

  nn::Sequential<Scalar>& network() { return net_; }
  const nn::Sequential<Scalar>& network() const { return net_; }
  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  DiscriminatorSpec spec_;
  nn::Sequential<Scalar> net_;
};

/// Zero-mean Gaussian init (std 0.02) on weights, zero biases.
template <typename Scalar>
void initialize_gan_weights(nn::Layer<Scalar>& net, Rng& rng, double stddev = 0.02) {
  std::vector<nn::Parameter<Scalar>*> params;
  net.collect(params);
  for (auto* p : params) {
    if (p->name == "weight") {
      nn::fill_normal(p->value, rng, stddev);
    } else {
      p->value.setZero();
    }
  }
}

template <typename Scalar>
Generator<Scalar> build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  Generator<Scalar> g(spec);
  Rng rng(seed);
  initialize_gan_weights(g.network(), rng);
  return g;
}

template <typename Scalar>
Discriminator<Scalar> build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  Discriminator<Scalar> d(spec);
  Rng rng(seed);
  initialize_gan_weights(d.network(), rng);
  return d;
}

/// The two style mappings and the two style discriminators.
template <typename Scalar>
struct TransferModel {
  GeneratorSpec generator_spec;
  DiscriminatorSpec discriminator_spec;
  Generator<Scalar> G;       // A -> B
  Generator<Scalar> G_bar;   // B -> A
  Discriminator<Scalar> D_A;
  Discriminator<Scalar> D_B;

  TransferModel() = default;
  TransferModel(const GeneratorSpec& gs, const DiscriminatorSpec& ds, std::uint64_t seed)
      : generator_spec(gs), discriminator_spec(ds),
        G(build_generator<Scalar>(gs, seed * 4 + 1)),
        G_bar(build_generator<Scalar>(gs, seed * 4 + 2)),
        D_A(build_discriminator<Scalar>(ds, seed * 4 + 3)),
        D_B(build_discriminator<Scalar>(ds, seed * 4 + 4)) {}

  void zero_grad() {
    nn::zero_gradients(G.network());
    nn::zero_gradients(G_bar.network());
    nn::zero_gradients(D_A.network());
    nn::zero_gradients(D_B.network());
  }

  std::vector<nn::Parameter<Scalar>*> generator_parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    G.network().collect(out);
    G_bar.network().collect(out);
    return out;
  }
  std::vector<nn::Parameter<Scalar>*> discriminator_parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    D_A.network().collect(out);
    D_B.network().collect(out);
    return out;
  }
  /// G, G_bar, D_A, D_B in that order.
  std::vector<nn::Parameter<Scalar>*> all_parameters() {
    auto out = generator_parameters();
    auto d = discriminator_parameters();
    out.insert(out.end(), d.begin(), d.end());
    return out;
  }
};

}  // namespace ptgan
