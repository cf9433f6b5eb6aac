#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ptgan/nn/im2col.hpp"
#include "ptgan/random.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan::nn {

/// A trainable array plus its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}
};

/// Values a layer keeps from its forward pass for the matching backward pass.
/// One cache per invocation, so a network can be applied several times
/// before any backward call.
template <typename Scalar>
struct Cache {
  std::vector<Matrix<Scalar>> mats;
  std::vector<Cache> children;
  int channels = 0, height = 0, width = 0;
};

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  /// `cache` may be null for inference-only calls.
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const = 0;
  /// Returns the input gradient and accumulates parameter gradients.
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) = 0;
  virtual void collect(std::vector<Parameter<Scalar>*>& /*out*/) {}
  virtual void collect(std::vector<const Parameter<Scalar>*>& /*out*/) const {}
  virtual std::string describe() const = 0;
};

template <typename Scalar>
void fill_normal(Matrix<Scalar>& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
}

// ---------------------------------------------------------------------------

template <typename Scalar>
class Conv2d : public Layer<Scalar> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, PadMode mode, bool bias)
      : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad), mode_(mode),
        has_bias_(bias),
        weight_("weight", out_channels, in_channels * kernel * kernel),
        bias_("bias", bias ? out_channels : 0, 1) {}

  ConvGeometry geometry(const Tensor<Scalar>& x) const {
    return ConvGeometry{x.channels, x.height, x.width, kernel_, stride_, pad_, mode_};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (x.channels != in_) throw ShapeMismatch("conv2d expects " + std::to_string(in_) + " channels");
    const ConvGeometry g = geometry(x);
    if (g.out_height() <= 0 || g.out_width() <= 0) throw ShapeMismatch("conv2d input too small");
    Matrix<Scalar> cols = im2col(x, g);
    Tensor<Scalar> y;
    y.channels = out_;
    y.height = g.out_height();
    y.width = g.out_width();
    y.data.noalias() = weight_.value * cols;
    if (has_bias_) y.data.colwise() += bias_.value.col(0);
    if (cache) {
      cache->channels = x.channels;
      cache->height = x.height;
      cache->width = x.width;
      cache->mats.push_back(std::move(cols));
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Matrix<Scalar>& cols = cache.mats.at(0);
    weight_.grad.noalias() += dy.data * cols.transpose();
    if (has_bias_) bias_.grad.col(0) += dy.data.rowwise().sum();
    Matrix<Scalar> dcols = weight_.value.transpose() * dy.data;
    ConvGeometry g{cache.channels, cache.height, cache.width, kernel_, stride_, pad_, mode_};
    return col2im(dcols, g);
  }

  void collect(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }
  void collect(std::vector<const Parameter<Scalar>*>& out) const override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  std::string describe() const override {
    return "conv" + std::to_string(kernel_) + "x" + std::to_string(kernel_) + "/s" + std::to_string(stride_) +
           " " + std::to_string(in_) + "->" + std::to_string(out_);
  }

  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }
  Parameter<Scalar>& weight() { return weight_; }

 private:
  int in_, out_, kernel_, stride_, pad_;
  PadMode mode_;
  bool has_bias_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Fractionally-strided convolution: the adjoint of a strided Conv2d.
template <typename Scalar>
class ConvTranspose2d : public Layer<Scalar> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad, int output_pad, bool bias)
      : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad),
        output_pad_(output_pad), has_bias_(bias),
        weight_("weight", in_channels, out_channels * kernel * kernel),
        bias_("bias", bias ? out_channels : 0, 1) {}

  ConvGeometry dual_geometry(int in_h, int in_w) const {
    const int oh = (in_h - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
    const int ow = (in_w - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
    return ConvGeometry{out_, oh, ow, kernel_, stride_, pad_, PadMode::zero};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (x.channels != in_) throw ShapeMismatch("conv_transpose2d expects " + std::to_string(in_) + " channels");
    const ConvGeometry g = dual_geometry(x.height, x.width);
    Matrix<Scalar> cols = weight_.value.transpose() * x.data;
    Tensor<Scalar> y = col2im(cols, g);
    if (has_bias_) y.data.colwise() += bias_.value.col(0);
    if (cache) {
      cache->channels = x.channels;
      cache->height = x.height;
      cache->width = x.width;
      cache->mats.push_back(x.data);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const ConvGeometry g = dual_geometry(cache.height, cache.width);
    Matrix<Scalar> dcols = im2col(dy, g);
    weight_.grad.noalias() += cache.mats.at(0) * dcols.transpose();
    if (has_bias_) bias_.grad.col(0) += dy.data.rowwise().sum();
    Tensor<Scalar> dx;
    dx.channels = cache.channels;
    dx.height = cache.height;
    dx.width = cache.width;
    dx.data.noalias() = weight_.value * dcols;
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }
  void collect(std::vector<const Parameter<Scalar>*>& out) const override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  std::string describe() const override {
    return "convT" + std::to_string(kernel_) + "x" + std::to_string(kernel_) + "/s" + std::to_string(stride_) +
           " " + std::to_string(in_) + "->" + std::to_string(out_);
  }

  Parameter<Scalar>& weight() { return weight_; }

 private:
  int in_, out_, kernel_, stride_, pad_, output_pad_;
  bool has_bias_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Per-sample, per-channel normalization without affine parameters.
template <typename Scalar>
class InstanceNorm : public Layer<Scalar> {
 public:
  explicit InstanceNorm(double eps = 1e-5) : eps_(eps) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    Tensor<Scalar> y = x;
    const Scalar n = static_cast<Scalar>(x.plane());
    Matrix<Scalar> inv_std(x.channels, 1);
    for (int c = 0; c < x.channels; ++c) {
      auto row = y.data.row(c);
      const Scalar mean = row.sum() / n;
      row.array() -= mean;
      const Scalar var = row.squaredNorm() / n;
      const Scalar inv = Scalar(1) / std::sqrt(var + static_cast<Scalar>(eps_));
      row *= inv;
      inv_std(c, 0) = inv;
    }
    if (cache) {
      cache->mats.push_back(y.data);
      cache->mats.push_back(std::move(inv_std));
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Matrix<Scalar>& xhat = cache.mats.at(0);
    const Matrix<Scalar>& inv_std = cache.mats.at(1);
    Tensor<Scalar> dx = dy;
    const Scalar n = static_cast<Scalar>(dy.plane());
    for (int c = 0; c < dy.channels; ++c) {
      auto g = dx.data.row(c);
      const Scalar mean_g = g.sum() / n;
      const Scalar mean_gx = g.dot(xhat.row(c)) / n;
      g = (g.array() - mean_g - xhat.row(c).array() * mean_gx) * inv_std(c, 0);
    }
    return dx;
  }

  std::string describe() const override { return "instance_norm"; }

 private:
  double eps_;
};

template <typename Scalar>
class LeakyReLU : public Layer<Scalar> {
 public:
  /// slope 0 gives a plain ReLU.
  explicit LeakyReLU(double slope = 0.0) : slope_(static_cast<Scalar>(slope)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    Tensor<Scalar> y = x;
    y.data = (x.data.array() > Scalar(0)).select(x.data, x.data * slope_);
    if (cache) cache->mats.push_back(x.data);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> dx = dy;
    dx.data = (cache.mats.at(0).array() > Scalar(0)).select(dy.data, dy.data * slope_);
    return dx;
  }

  std::string describe() const override { return slope_ == Scalar(0) ? "relu" : "leaky_relu"; }

 private:
  Scalar slope_;
};

template <typename Scalar>
class Tanh : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    Tensor<Scalar> y = x;
    y.data = x.data.array().tanh();
    if (cache) cache->mats.push_back(y.data);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> dx = dy;
    const Matrix<Scalar>& y = cache.mats.at(0);
    dx.data = dy.data.array() * (Scalar(1) - y.array().square());
    return dx;
  }

  std::string describe() const override { return "tanh"; }
};

/// Fully connected layer over the flattened input; output is (out, 1, 1).
template <typename Scalar>
class Linear : public Layer<Scalar> {
 public:
  Linear(int in_features, int out_features)
      : in_(in_features), out_(out_features), weight_("weight", out_features, in_features),
        bias_("bias", out_features, 1) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (x.size() != in_) throw ShapeMismatch("linear expects " + std::to_string(in_) + " inputs");
    Eigen::Map<const Vector<Scalar>> flat(x.data.data(), x.size());
    Tensor<Scalar> y(out_, 1, 1);
    y.data.col(0).noalias() = weight_.value * flat + bias_.value.col(0);
    if (cache) {
      cache->channels = x.channels;
      cache->height = x.height;
      cache->width = x.width;
      cache->mats.push_back(flat);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Matrix<Scalar>& flat = cache.mats.at(0);
    weight_.grad.noalias() += dy.data.col(0) * flat.col(0).transpose();
    bias_.grad.col(0) += dy.data.col(0);
    Tensor<Scalar> dx(cache.channels, cache.height, cache.width);
    Eigen::Map<Vector<Scalar>> flat_dx(dx.data.data(), dx.size());
    flat_dx.noalias() = weight_.value.transpose() * dy.data.col(0);
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void collect(std::vector<const Parameter<Scalar>*>& out) const override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  std::string describe() const override {
    return "linear " + std::to_string(in_) + "->" + std::to_string(out_);
  }

  Parameter<Scalar>& weight() { return weight_; }

 private:
  int in_, out_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

}  // namespace ptgan::nn
