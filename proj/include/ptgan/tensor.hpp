#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "ptgan/errors.hpp"

namespace ptgan {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Channel-major feature map: one row per channel, each row holds the
/// height x width plane in row-major order.
template <typename Scalar>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Matrix<Scalar> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(Matrix<Scalar>::Zero(c, h * w)) {}
  Tensor(int c, int h, int w, Scalar fill)
      : channels(c), height(h), width(w), data(Matrix<Scalar>::Constant(c, h * w, fill)) {}

  int plane() const { return height * width; }
  Eigen::Index size() const { return data.size(); }

  Scalar& at(int c, int y, int x) { return data(c, y * width + x); }
  Scalar at(int c, int y, int x) const { return data(c, y * width + x); }

  bool same_shape(const Tensor& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }
};

/// Image in normalized value range [-1, 1], 1 or 3 channels.
template <typename Scalar>
using ImageTensor = Tensor<Scalar>;

/// Per-pixel foreground weights in [0, 1]; stored as a single-channel tensor.
template <typename Scalar>
struct ForegroundMask {
  int height = 0;
  int width = 0;
  Matrix<Scalar> weights;  // height x width

  ForegroundMask() = default;
  ForegroundMask(int h, int w, Scalar fill = Scalar(0))
      : height(h), width(w), weights(Matrix<Scalar>::Constant(h, w, fill)) {}

  template <typename Other>
  ForegroundMask<Other> cast() const {
    ForegroundMask<Other> out;
    out.height = height;
    out.width = width;
    out.weights = weights.template cast<Other>();
    return out;
  }
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(what) + ": " + std::to_string(a.channels) + "x" +
                        std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                        std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                        std::to_string(b.width));
  }
}

template <typename Scalar>
void require_mask_matches(const Tensor<Scalar>& image, const ForegroundMask<Scalar>& mask, const char* what) {
  if (image.height != mask.height || image.width != mask.width) {
    throw ShapeMismatch(std::string(what) + ": mask " + std::to_string(mask.height) + "x" +
                        std::to_string(mask.width) + " vs image " + std::to_string(image.height) + "x" +
                        std::to_string(image.width));
  }
}

/// True when every value lies in [-1, 1] and dimensions are positive.
template <typename Scalar>
bool is_valid_image(const ImageTensor<Scalar>& image) {
  if (image.channels != 1 && image.channels != 3) return false;
  if (image.height <= 0 || image.width <= 0) return false;
  return image.data.size() == 0 ||
         (image.data.array().abs() <= Scalar(1)).all();
}

template <typename Scalar>
bool is_valid_mask(const ForegroundMask<Scalar>& mask) {
  if (mask.height <= 0 || mask.width <= 0) return false;
  return (mask.weights.array() >= Scalar(0)).all() && (mask.weights.array() <= Scalar(1)).all();
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.data.allFinite();
}

/// Mean pixel brightness mapped back to [0, 1].
template <typename Scalar>
double mean_brightness(const ImageTensor<Scalar>& image) {
  return (static_cast<double>(image.data.mean()) + 1.0) * 0.5;
}

}  // namespace ptgan
