#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "ptgan/nn/layers.hpp"

namespace ptgan::nn {

template <typename Scalar>
class Sequential : public Layer<Scalar> {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (cache) cache->children.resize(layers_.size());
    Tensor<Scalar> h = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i]->forward(h, cache ? &cache->children[i] : nullptr);
    }
    return h;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> g = dy;
    for (size_t i = layers_.size(); i-- > 0;) {
      g = layers_[i]->backward(g, cache.children.at(i));
    }
    return g;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) override {
    for (auto& l : layers_) l->collect(out);
  }
  void collect(std::vector<const Parameter<Scalar>*>& out) const override {
    for (const auto& l : layers_) l->collect(out);
  }

  std::string describe() const override {
    std::string s;
    for (const auto& l : layers_) {
      if (!s.empty()) s += " | ";
      s += l->describe();
    }
    return s;
  }

  size_t size() const { return layers_.size(); }
  const Layer<Scalar>& layer(size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

/// y = x + body(x), with body = reflect-conv3, norm, relu, reflect-conv3, norm.
template <typename Scalar>
class ResidualBlock : public Layer<Scalar> {
 public:
  explicit ResidualBlock(int channels) {
    body_.template add<Conv2d<Scalar>>(channels, channels, 3, 1, 1, PadMode::reflect, false);
    body_.template add<InstanceNorm<Scalar>>();
    body_.template add<LeakyReLU<Scalar>>(0.0);
    body_.template add<Conv2d<Scalar>>(channels, channels, 3, 1, 1, PadMode::reflect, false);
    body_.template add<InstanceNorm<Scalar>>();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (cache) cache->children.resize(1);
    Tensor<Scalar> y = body_.forward(x, cache ? &cache->children[0] : nullptr);
    y.data += x.data;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> dx = body_.backward(dy, cache.children.at(0));
    dx.data += dy.data;
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) override { body_.collect(out); }
  void collect(std::vector<const Parameter<Scalar>*>& out) const override { body_.collect(out); }
  std::string describe() const override { return "resblock[" + body_.describe() + "]"; }

 private:
  Sequential<Scalar> body_;
};

/// Flattens all parameter values of a layer into one vector, in collection order.
template <typename Scalar>
Vector<Scalar> flatten_parameters(const Layer<Scalar>& net) {
  std::vector<const Parameter<Scalar>*> params;
  net.collect(params);
  Eigen::Index total = 0;
  for (const auto* p : params) total += p->value.size();
  Vector<Scalar> flat(total);
  Eigen::Index offset = 0;
  for (const auto* p : params) {
    flat.segment(offset, p->value.size()) = Eigen::Map<const Vector<Scalar>>(p->value.data(), p->value.size());
    offset += p->value.size();
  }
  return flat;
}

template <typename Scalar>
Vector<Scalar> flatten_gradients(Layer<Scalar>& net) {
  std::vector<Parameter<Scalar>*> params;
  net.collect(params);
  Eigen::Index total = 0;
  for (const auto* p : params) total += p->grad.size();
  Vector<Scalar> flat(total);
  Eigen::Index offset = 0;
  for (const auto* p : params) {
    flat.segment(offset, p->grad.size()) = Eigen::Map<const Vector<Scalar>>(p->grad.data(), p->grad.size());
    offset += p->grad.size();
  }
  return flat;
}

template <typename Scalar>
void zero_gradients(Layer<Scalar>& net) {
  std::vector<Parameter<Scalar>*> params;
  net.collect(params);
  for (auto* p : params) p->grad.setZero();
}

template <typename Scalar>
Eigen::Index parameter_count(const Layer<Scalar>& net) {
  std::vector<const Parameter<Scalar>*> params;
  net.collect(params);
  Eigen::Index total = 0;
  for (const auto* p : params) total += p->value.size();
  return total;
}

}  // namespace ptgan::nn
