#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lifefuse/errors.hpp"
#include "lifefuse/neural/layers.hpp"

namespace lifefuse::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
};

// Central-difference check of analytic gradients. Callers run one
// forward/backward pass first so every param's grad field is populated
// (inputs count too when wrapped in a Param); `loss` must then
// re-evaluate the same scalar deterministically from current values.
template <typename LossFn>
GradCheckResult check_gradients(const std::vector<Param*>& params, LossFn&& loss, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("gradient check: step size must lie in [1e-7, 1e-3]");
  }
  GradCheckResult result;
  for (Param* p : params) {
    for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
        const double saved = p->value(r, c);
        p->value(r, c) = saved + eps;
        const double loss_plus = loss();
        p->value(r, c) = saved - eps;
        const double loss_minus = loss();
        p->value(r, c) = saved;
        const double fd = (loss_plus - loss_minus) / (2.0 * eps);
        const double analytic = p->grad(r, c);
        if (!std::isfinite(fd) || !std::isfinite(analytic)) {
          throw NumericalError("gradient check: non-finite gradient in parameter " + p->name);
        }
        // The 1e-6 floor is the resolution limit of the difference quotient
        // itself: an O(1) loss carries ~1e-16 of rounding, so fd components
        // below ~1e-11 are noise and only their absolute agreement counts.
        const double rel = std::abs(fd - analytic) /
                           std::max(1e-6, std::abs(fd) + std::abs(analytic));
        if (rel > result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = p->name;
        }
      }
    }
  }
  return result;
}

namespace detail {

inline Mat random_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& eng,
                      double scale = 1.0) {
  Mat m(rows, cols);
  uniform_init(m, scale, eng);
  return m;
}

inline double half_square_sum(const std::vector<Mat>& seq) {
  double s = 0.0;
  for (const Mat& m : seq) s += m.squaredNorm();
  return 0.5 * s;
}

}  // namespace detail

// The harnesses below check one layer in isolation: random weights and
// inputs, loss = half the squared output norm, so the output itself is
// the upstream gradient.

inline GradCheckResult grad_check_dense(Eigen::Index in_width, Eigen::Index out_width,
                                        Eigen::Index batch, std::uint64_t seed,
                                        double eps = 1e-5) {
  std::mt19937_64 eng(seed);
  DenseLayer layer(in_width, out_width, "dense");
  layer.init(eng);
  Param input("input", "input", batch, in_width);
  input.value = detail::random_mat(batch, in_width, eng);

  const Mat y = layer.forward(input.value);
  input.grad = layer.backward(y);

  std::vector<Param*> params;
  layer.collect(params);
  params.push_back(&input);
  auto loss = [&] { return 0.5 * layer.forward(input.value).squaredNorm(); };
  return check_gradients(params, loss, eps);
}

inline GradCheckResult grad_check_conv1d(Eigen::Index in_channels, Eigen::Index out_channels,
                                         Eigen::Index kernel, Eigen::Index length,
                                         Eigen::Index batch, std::uint64_t seed,
                                         double eps = 1e-5) {
  std::mt19937_64 eng(seed);
  Conv1dLayer layer(in_channels, out_channels, kernel, "conv");
  layer.init(eng);
  std::vector<Param> inputs;
  inputs.reserve(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    inputs.emplace_back("input.s" + std::to_string(b), "input", in_channels, length);
    inputs.back().value = detail::random_mat(in_channels, length, eng);
  }
  auto gather = [&] {
    std::vector<Mat> xs;
    xs.reserve(inputs.size());
    for (const Param& p : inputs) xs.push_back(p.value);
    return xs;
  };

  const std::vector<Mat> ys = layer.forward(gather());
  const std::vector<Mat> gxs = layer.backward(ys);
  for (std::size_t b = 0; b < inputs.size(); ++b) inputs[b].grad = gxs[b];

  std::vector<Param*> params;
  layer.collect(params);
  for (Param& p : inputs) params.push_back(&p);
  auto loss = [&] { return detail::half_square_sum(layer.forward(gather())); };
  return check_gradients(params, loss, eps);
}

inline GradCheckResult grad_check_lstm(Eigen::Index input_size, Eigen::Index hidden_size,
                                       std::size_t num_layers, std::size_t steps,
                                       Eigen::Index batch, std::uint64_t seed,
                                       double eps = 1e-5) {
  std::mt19937_64 eng(seed);
  LstmStack stack(input_size, hidden_size, num_layers, "lstm");
  stack.init(eng);
  std::vector<Param> inputs;
  inputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    inputs.emplace_back("input.t" + std::to_string(t), "input", batch, input_size);
    inputs.back().value = detail::random_mat(batch, input_size, eng);
  }
  auto gather = [&] {
    std::vector<Mat> xs;
    xs.reserve(inputs.size());
    for (const Param& p : inputs) xs.push_back(p.value);
    return xs;
  };

  const std::vector<Mat> hs = stack.forward(gather());
  const std::vector<Mat> gxs = stack.backward(hs);
  for (std::size_t t = 0; t < steps; ++t) inputs[t].grad = gxs[t];

  std::vector<Param*> params;
  stack.collect(params);
  for (Param& p : inputs) params.push_back(&p);
  auto loss = [&] { return detail::half_square_sum(stack.forward(gather())); };
  return check_gradients(params, loss, eps);
}

// Dropout has no learnable parameters; the check covers the input
// gradient with the mask pinned by reseeding before every forward.
inline GradCheckResult grad_check_dropout(Eigen::Index rows, Eigen::Index cols, double keep_prob,
                                          std::uint64_t seed, double eps = 1e-5) {
  std::mt19937_64 eng(seed);
  DropoutLayer layer(keep_prob, seed);
  Param input("input", "input", rows, cols);
  input.value = detail::random_mat(rows, cols, eng);

  layer.reset(seed);
  const Mat y = layer.forward(input.value, Mode::train);
  input.grad = layer.backward(y);

  auto loss = [&] {
    layer.reset(seed);
    return 0.5 * layer.forward(input.value, Mode::train).squaredNorm();
  };
  return check_gradients({&input}, loss, eps);
}

template <typename Layer>
GradCheckResult grad_check_activation(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                      double eps = 1e-5) {
  std::mt19937_64 eng(seed);
  Layer layer;
  Param input("input", "input", rows, cols);
  input.value = detail::random_mat(rows, cols, eng);
  // Nudge values away from the ReLU kink where the central difference
  // straddles the non-differentiable point.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (std::abs(input.value(r, c)) < 1e-2) input.value(r, c) += 0.05;
    }
  }

  const Mat y = layer.forward(input.value);
  input.grad = layer.backward(y);

  auto loss = [&] { return 0.5 * layer.forward(input.value).squaredNorm(); };
  return check_gradients({&input}, loss, eps);
}

}  // namespace lifefuse::nn
