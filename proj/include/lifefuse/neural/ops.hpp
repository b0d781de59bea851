#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "lifefuse/neural/grad_check.hpp"
#include "lifefuse/neural/layers.hpp"
#include "lifefuse/tensor.hpp"

namespace lifefuse::nn {

// Valid-mode sliding dot product (no kernel flip). input [C_in x L],
// kernels [C_out x C_in x K], bias [C_out] -> [C_out x (L-K+1)].
inline Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 2) throw std::invalid_argument("conv1d: input must have rank 2");
  if (kernels.rank() != 3) throw std::invalid_argument("conv1d: kernels must have rank 3");
  if (bias.rank() != 1) throw std::invalid_argument("conv1d: bias must have rank 1");
  const std::size_t cin = input.dim(0);
  const std::size_t len = input.dim(1);
  const std::size_t cout = kernels.dim(0);
  const std::size_t k = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw std::invalid_argument("conv1d: kernel expects " + std::to_string(kernels.dim(1)) +
                                " input channels, input has " + std::to_string(cin));
  }
  if (bias.dim(0) != cout) throw std::invalid_argument("conv1d: bias length must equal C_out");
  if (len < k) throw std::invalid_argument("conv1d: input shorter than kernel");

  const std::size_t out_len = len - k + 1;
  Tensor out({cout, out_len});
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = bias.at(o);
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t j = 0; j < k; ++j) acc += kernels.at(o, c, j) * input.at(c, t + j);
      }
      out.at(o, t) = acc;
    }
  }
  return out;
}

// Weights for a single cell or single-layer sequence run. The 4H axis
// is ordered i, f, g, o.
struct LstmCellWeights {
  Tensor w_ih;  // [D x 4H]
  Tensor w_hh;  // [H x 4H]
  Tensor bias;  // [4H]

  std::size_t hidden_size() const { return bias.dim(0) / 4; }

  void validate(std::size_t input_size) const {
    if (w_ih.rank() != 2 || w_hh.rank() != 2 || bias.rank() != 1) {
      throw std::invalid_argument("lstm weights: w_ih, w_hh must be rank 2 and bias rank 1");
    }
    if (bias.dim(0) % 4 != 0) throw std::invalid_argument("lstm weights: bias length must be 4*H");
    const std::size_t h = hidden_size();
    if (w_ih.dim(0) != input_size || w_ih.dim(1) != 4 * h || w_hh.dim(0) != h ||
        w_hh.dim(1) != 4 * h) {
      throw std::invalid_argument("lstm weights: shape mismatch for input size " +
                                  std::to_string(input_size) + ", hidden size " +
                                  std::to_string(h));
    }
  }
};

// One recurrence step. x [D], h and c [H] -> (h', c').
inline std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                                           const LstmCellWeights& weights) {
  if (x.rank() != 1 || h.rank() != 1 || c.rank() != 1) {
    throw std::invalid_argument("lstm_cell: x, h, c must have rank 1");
  }
  weights.validate(x.dim(0));
  const std::size_t hs = weights.hidden_size();
  if (h.dim(0) != hs || c.dim(0) != hs) {
    throw std::invalid_argument("lstm_cell: state length must equal hidden size " +
                                std::to_string(hs));
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Tensor h_next({hs});
  Tensor c_next({hs});
  for (std::size_t u = 0; u < hs; ++u) {
    double pre[4];
    for (int gate = 0; gate < 4; ++gate) {
      const std::size_t col = static_cast<std::size_t>(gate) * hs + u;
      double acc = weights.bias.at(col);
      for (std::size_t d = 0; d < x.dim(0); ++d) acc += x.at(d) * weights.w_ih.at(d, col);
      for (std::size_t d = 0; d < hs; ++d) acc += h.at(d) * weights.w_hh.at(d, col);
      pre[gate] = acc;
    }
    const double i = sig(pre[0]);
    const double f = sig(pre[1]);
    const double g = std::tanh(pre[2]);
    const double o = sig(pre[3]);
    c_next.at(u) = f * c.at(u) + i * g;
    h_next.at(u) = o * std::tanh(c_next.at(u));
  }
  return {std::move(h_next), std::move(c_next)};
}

// Single-layer run over inputs [T x D] from zero initial state,
// returning the hidden sequence [T x H].
inline Tensor lstm_sequence(const Tensor& inputs, const LstmCellWeights& weights) {
  if (inputs.rank() != 2) throw std::invalid_argument("lstm_sequence: inputs must have rank 2");
  weights.validate(inputs.dim(1));
  const std::size_t T = inputs.dim(0);
  const std::size_t hs = weights.hidden_size();
  Tensor h({hs}, 0.0);
  Tensor c({hs}, 0.0);
  Tensor out({T, hs});
  for (std::size_t t = 0; t < T; ++t) {
    Tensor x({inputs.dim(1)});
    for (std::size_t d = 0; d < x.dim(0); ++d) x.at(d) = inputs.at(t, d);
    auto [h_next, c_next] = lstm_cell(x, h, c, weights);
    h = std::move(h_next);
    c = std::move(c_next);
    for (std::size_t u = 0; u < hs; ++u) out.at(t, u) = h.at(u);
  }
  return out;
}

enum class LayerKind { dense, conv1d, lstm, dropout, relu, sigmoid, tanh };

// Size description of one layer, used to build throwaway instances for
// gradient checking. Only the fields relevant to `kind` are read.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_width = 4;
  std::size_t out_width = 3;
  std::size_t in_channels = 2;
  std::size_t out_channels = 3;
  std::size_t kernel_size = 3;
  std::size_t input_size = 3;
  std::size_t hidden_size = 4;
  std::size_t num_layers = 1;
  double keep_prob = 0.8;
};

// Multi-layer run described by a spec, weights drawn from `seed`.
inline Tensor lstm_sequence(const Tensor& inputs, const LayerSpec& spec, std::uint64_t seed) {
  if (inputs.rank() != 2) throw std::invalid_argument("lstm_sequence: inputs must have rank 2");
  if (spec.kind != LayerKind::lstm) {
    throw std::invalid_argument("lstm_sequence: spec kind must be lstm");
  }
  if (inputs.dim(1) != spec.input_size) {
    throw std::invalid_argument("lstm_sequence: input width " + std::to_string(inputs.dim(1)) +
                                " does not match spec input size " +
                                std::to_string(spec.input_size));
  }
  LstmStack stack(static_cast<Eigen::Index>(spec.input_size),
                  static_cast<Eigen::Index>(spec.hidden_size), spec.num_layers, "lstm");
  std::mt19937_64 eng(seed);
  stack.init(eng);

  const std::size_t T = inputs.dim(0);
  std::vector<Mat> xs(T, Mat(1, static_cast<Eigen::Index>(spec.input_size)));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < spec.input_size; ++d) {
      xs[t](0, static_cast<Eigen::Index>(d)) = inputs.at(t, d);
    }
  }
  const std::vector<Mat> hs = stack.forward(xs);
  Tensor out({T, spec.hidden_size});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < spec.hidden_size; ++u) {
      out.at(t, u) = hs[t](0, static_cast<Eigen::Index>(u));
    }
  }
  return out;
}

// Inverted dropout as a pure function; the mask is fully determined by
// the seed.
inline Tensor dropout(const Tensor& input, double keep_prob, Mode mode, std::uint64_t seed) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw std::invalid_argument("dropout: keep_prob must lie in (0,1]");
  }
  if (mode == Mode::eval || keep_prob >= 1.0) return input;
  Tensor out = input;
  std::mt19937_64 eng(seed);
  std::bernoulli_distribution keep(keep_prob);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = keep(eng) ? out[i] / keep_prob : 0.0;
  }
  return out;
}

// Dispatch a gradient check for one layer kind described by `spec`.
inline GradCheckResult grad_check(const LayerSpec& spec, std::uint64_t seed, double eps = 1e-5) {
  constexpr Eigen::Index batch = 3;
  switch (spec.kind) {
    case LayerKind::dense:
      return grad_check_dense(static_cast<Eigen::Index>(spec.in_width),
                              static_cast<Eigen::Index>(spec.out_width), batch, seed, eps);
    case LayerKind::conv1d:
      return grad_check_conv1d(static_cast<Eigen::Index>(spec.in_channels),
                               static_cast<Eigen::Index>(spec.out_channels),
                               static_cast<Eigen::Index>(spec.kernel_size),
                               static_cast<Eigen::Index>(spec.kernel_size + 5), batch, seed, eps);
    case LayerKind::lstm:
      return grad_check_lstm(static_cast<Eigen::Index>(spec.input_size),
                             static_cast<Eigen::Index>(spec.hidden_size), spec.num_layers, 4,
                             batch, seed, eps);
    case LayerKind::dropout:
      return grad_check_dropout(batch, static_cast<Eigen::Index>(spec.in_width), spec.keep_prob,
                                seed, eps);
    case LayerKind::relu:
      return grad_check_activation<ReluLayer>(batch, static_cast<Eigen::Index>(spec.in_width),
                                              seed, eps);
    case LayerKind::sigmoid:
      return grad_check_activation<SigmoidLayer>(batch, static_cast<Eigen::Index>(spec.in_width),
                                                 seed, eps);
    case LayerKind::tanh:
      return grad_check_activation<TanhLayer>(batch, static_cast<Eigen::Index>(spec.in_width),
                                              seed, eps);
  }
  throw std::invalid_argument("grad_check: unknown layer kind");
}

}  // namespace lifefuse::nn
