#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "lifefuse/tensor.hpp"

namespace lifefuse::nn {

inline constexpr double kBceClip = 1e-7;

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;
};

// Per-sample weighted binary cross-entropy, averaged over the batch.
// Only the log term the target selects is evaluated, with its argument
// clamped to [kBceClip, 1] so a perfect prediction scores exactly zero
// while near-misses stay finite; the gradient is zero where the clamp
// is active. Targets must be exactly 0 or 1.
inline LossResult weighted_bce(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                               const Eigen::MatrixXd& weight) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      pred.rows() != weight.rows() || pred.cols() != weight.cols()) {
    throw std::invalid_argument("weighted_bce: prediction, target, and weight shapes differ");
  }
  if (pred.size() == 0) throw std::invalid_argument("weighted_bce: empty batch");
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      const double y = target(r, c);
      if (y != 0.0 && y != 1.0) {
        throw std::invalid_argument("weighted_bce: target at (" + std::to_string(r) + "," +
                                    std::to_string(c) + ") is " + std::to_string(y) +
                                    ", expected exactly 0 or 1");
      }
      const double w = weight(r, c);
      const double match = y == 1.0 ? pred(r, c) : 1.0 - pred(r, c);
      const double arg = std::clamp(match, kBceClip, 1.0);
      loss += -w * std::log(arg);
      if (arg == match) {
        // d(-w ln x)/dx = -w/x for y=1; chain through 1-x for y=0.
        grad(r, c) = (y == 1.0 ? -w / match : w / match) / n;
      }
    }
  }
  return {loss / n, std::move(grad)};
}

inline LossResult weighted_bce(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return weighted_bce(pred, target, Eigen::MatrixXd::Ones(pred.rows(), pred.cols()));
}

inline LossResult mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse: prediction and target shapes differ");
  }
  if (pred.size() == 0) throw std::invalid_argument("mse: empty batch");
  const double n = static_cast<double>(pred.size());
  const Eigen::MatrixXd diff = pred - target;
  return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

namespace detail {

inline Eigen::MatrixXd column_from_tensor(const Tensor& t, const char* what) {
  if (t.size() == 0) throw std::invalid_argument(std::string(what) + ": empty tensor");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.size()), 1);
  for (std::size_t i = 0; i < t.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = t[i];
  return m;
}

inline Tensor tensor_from_column(const Eigen::MatrixXd& m, const std::vector<std::size_t>& shape) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = m(static_cast<Eigen::Index>(i), 0);
  return t;
}

}  // namespace detail

struct TensorLossResult {
  double loss = 0.0;
  Tensor grad;
};

inline TensorLossResult weighted_bce(const Tensor& pred, const Tensor& target,
                                     const Tensor& weight) {
  if (!pred.same_shape(target) || !pred.same_shape(weight)) {
    throw std::invalid_argument("weighted_bce: prediction, target, and weight shapes differ");
  }
  auto r = weighted_bce(detail::column_from_tensor(pred, "weighted_bce"),
                        detail::column_from_tensor(target, "weighted_bce"),
                        detail::column_from_tensor(weight, "weighted_bce"));
  return {r.loss, detail::tensor_from_column(r.grad, pred.shape)};
}

inline TensorLossResult weighted_bce(const Tensor& pred, const Tensor& target) {
  return weighted_bce(pred, target, Tensor(pred.shape, 1.0));
}

inline TensorLossResult mse(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument("mse: prediction and target shapes differ");
  }
  auto r = mse(detail::column_from_tensor(pred, "mse"),
               detail::column_from_tensor(target, "mse"));
  return {r.loss, detail::tensor_from_column(r.grad, pred.shape)};
}

}  // namespace lifefuse::nn
