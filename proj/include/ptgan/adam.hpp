#pragma once

#include <cmath>
#include <vector>

#include "ptgan/nn/layers.hpp"

namespace ptgan {

/// Adam moments for an ordered parameter list.
template <typename Scalar>
struct AdamState {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long steps = 0;
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;

  AdamState() = default;
  AdamState(const std::vector<nn::Parameter<Scalar>*>& params, double b1, double b2) : beta1(b1), beta2(b2) {
    for (const auto* p : params) {
      m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
};

/// One bias-corrected Adam update. A zero learning rate leaves values untouched.
template <typename Scalar>
void adam_step(const std::vector<nn::Parameter<Scalar>*>& params, AdamState<Scalar>& state, double lr) {
  state.steps += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.steps));
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar step = static_cast<Scalar>(lr / bc1);
  const Scalar inv_sqrt_bc2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
  const Scalar eps = static_cast<Scalar>(state.eps);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * p.grad;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    if (lr == 0.0) continue;
    p.value.array() -= step * state.m[i].array() / (state.v[i].array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

}  // namespace ptgan
