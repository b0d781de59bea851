#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lifefuse/rng.hpp"

namespace lifefuse::nn {

using Mat = Eigen::MatrixXd;

// One learnable tensor plus its gradient accumulator. `kind` names the
// owning layer family for checkpoint headers.
struct Param {
  std::string name;
  std::string kind;
  Mat value;
  Mat grad;

  Param(std::string n, std::string k, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), kind(std::move(k)), value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

inline void uniform_init(Mat& m, double bound, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(eng);
  }
}

inline Mat sigmoid(const Mat& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

// Batched affine map: x [B x In] -> x*W + b, W [In x Out].
class DenseLayer {
 public:
  DenseLayer(Eigen::Index in_width, Eigen::Index out_width, const std::string& name)
      : w_(name + ".w", "dense", in_width, out_width), b_(name + ".b", "dense", 1, out_width) {}

  // The small positive bias keeps units alive at the start: a dense layer
  // fed by freshly initialized recurrent stacks sees near-constant inputs,
  // so a unit starting on the dead side of a following ReLU would never
  // receive gradient again.
  void init(std::mt19937_64& eng) {
    uniform_init(w_.value, 1.0 / std::sqrt(static_cast<double>(w_.value.rows())), eng);
    b_.value.setConstant(0.01);
  }

  Mat forward(const Mat& x) {
    if (x.cols() != w_.value.rows()) {
      throw std::invalid_argument(w_.name + ": input width " + std::to_string(x.cols()) +
                                  " does not match " + std::to_string(w_.value.rows()));
    }
    x_ = x;
    return (x * w_.value).rowwise() + b_.value.row(0);
  }

  Mat backward(const Mat& gy) {
    w_.grad.noalias() += x_.transpose() * gy;
    b_.grad.row(0) += gy.colwise().sum();
    return gy * w_.value.transpose();
  }

  Eigen::Index in_width() const { return w_.value.rows(); }
  Eigen::Index out_width() const { return w_.value.cols(); }

  void collect(std::vector<Param*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
  }

 private:
  Param w_, b_;
  Mat x_;
};

// Valid-mode 1-D convolution without kernel flip. Samples are [C x L]
// matrices; a batch is a vector of them. Internally each sample is
// unrolled into a [C*K x L'] patch matrix so the sliding dot product
// becomes one GEMM.
class Conv1dLayer {
 public:
  Conv1dLayer(Eigen::Index in_channels, Eigen::Index out_channels, Eigen::Index kernel,
              const std::string& name)
      : kernel_(kernel),
        w_(name + ".w", "conv1d", out_channels, in_channels * kernel),
        b_(name + ".b", "conv1d", out_channels, 1) {}

  void init(std::mt19937_64& eng) {
    uniform_init(w_.value, 1.0 / std::sqrt(static_cast<double>(w_.value.cols())), eng);
    b_.value.setZero();
  }

  std::vector<Mat> forward(const std::vector<Mat>& xs) {
    const Eigen::Index cin = w_.value.cols() / kernel_;
    patches_.resize(xs.size());
    std::vector<Mat> out(xs.size());
    for (std::size_t s = 0; s < xs.size(); ++s) {
      const Mat& x = xs[s];
      if (x.rows() != cin) {
        throw std::invalid_argument("conv1d: expected " + std::to_string(cin) + " channels, got " +
                                    std::to_string(x.rows()));
      }
      if (x.cols() < kernel_) {
        throw std::invalid_argument("conv1d: input length " + std::to_string(x.cols()) +
                                    " shorter than kernel " + std::to_string(kernel_));
      }
      const Eigen::Index out_len = x.cols() - kernel_ + 1;
      Mat& patch = patches_[s];
      patch.resize(cin * kernel_, out_len);
      for (Eigen::Index t = 0; t < out_len; ++t) {
        for (Eigen::Index k = 0; k < kernel_; ++k) {
          patch.block(k * cin, t, cin, 1) = x.col(t + k);
        }
      }
      out[s] = (w_.value * patch).colwise() + b_.value.col(0);
    }
    return out;
  }

  std::vector<Mat> backward(const std::vector<Mat>& gys) {
    const Eigen::Index cin = w_.value.cols() / kernel_;
    std::vector<Mat> gxs(gys.size());
    for (std::size_t s = 0; s < gys.size(); ++s) {
      const Mat& gy = gys[s];
      const Mat& patch = patches_[s];
      w_.grad.noalias() += gy * patch.transpose();
      b_.grad.col(0) += gy.rowwise().sum();
      const Mat gpatch = w_.value.transpose() * gy;
      Mat& gx = gxs[s];
      gx = Mat::Zero(cin, gy.cols() + kernel_ - 1);
      for (Eigen::Index t = 0; t < gy.cols(); ++t) {
        for (Eigen::Index k = 0; k < kernel_; ++k) {
          gx.col(t + k) += gpatch.block(k * cin, t, cin, 1);
        }
      }
    }
    return gxs;
  }

  Eigen::Index kernel() const { return kernel_; }
  Eigen::Index in_channels() const { return w_.value.cols() / kernel_; }
  Eigen::Index out_channels() const { return w_.value.rows(); }

  void collect(std::vector<Param*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
  }

 private:
  Eigen::Index kernel_;
  Param w_, b_;
  std::vector<Mat> patches_;
};

// Single LSTM layer over a time-major batch: xs has T entries of [B x D],
// hidden states are [B x H]. Gate order along the 4H axis is i, f, g, o.
class LstmLayer {
 public:
  LstmLayer(Eigen::Index input_size, Eigen::Index hidden_size, const std::string& name)
      : hidden_(hidden_size),
        w_ih_(name + ".w_ih", "lstm", input_size, 4 * hidden_size),
        w_hh_(name + ".w_hh", "lstm", hidden_size, 4 * hidden_size),
        b_(name + ".b", "lstm", 1, 4 * hidden_size) {}

  void init(std::mt19937_64& eng) {
    uniform_init(w_ih_.value, 1.0 / std::sqrt(static_cast<double>(w_ih_.value.rows())), eng);
    uniform_init(w_hh_.value, 1.0 / std::sqrt(static_cast<double>(hidden_)), eng);
    b_.value.setZero();
    b_.value.block(0, hidden_, 1, hidden_).setConstant(1.0);  // forget-gate bias
  }

  std::vector<Mat> forward(const std::vector<Mat>& xs) {
    if (xs.empty()) throw std::invalid_argument("lstm: empty sequence");
    const Eigen::Index batch = xs[0].rows();
    if (xs[0].cols() != w_ih_.value.rows()) {
      throw std::invalid_argument("lstm: input width " + std::to_string(xs[0].cols()) +
                                  " does not match " + std::to_string(w_ih_.value.rows()));
    }
    const std::size_t T = xs.size();
    xs_ = xs;
    i_.assign(T, {});
    f_.assign(T, {});
    g_.assign(T, {});
    o_.assign(T, {});
    c_.assign(T, {});
    tanh_c_.assign(T, {});
    hs_.assign(T, {});

    Mat h = Mat::Zero(batch, hidden_);
    Mat c = Mat::Zero(batch, hidden_);
    for (std::size_t t = 0; t < T; ++t) {
      Mat pre = xs[t] * w_ih_.value + h * w_hh_.value;
      pre.rowwise() += b_.value.row(0);
      i_[t] = sigmoid(pre.block(0, 0, batch, hidden_));
      f_[t] = sigmoid(pre.block(0, hidden_, batch, hidden_));
      g_[t] = pre.block(0, 2 * hidden_, batch, hidden_).array().tanh().matrix();
      o_[t] = sigmoid(pre.block(0, 3 * hidden_, batch, hidden_));
      c = f_[t].cwiseProduct(c) + i_[t].cwiseProduct(g_[t]);
      c_[t] = c;
      tanh_c_[t] = c.array().tanh().matrix();
      h = o_[t].cwiseProduct(tanh_c_[t]);
      hs_[t] = h;
    }
    return hs_;
  }

  // ghs must hold one [B x H] gradient per time step (zeros where the
  // upper stage never read the hidden state).
  std::vector<Mat> backward(const std::vector<Mat>& ghs) {
    const std::size_t T = xs_.size();
    if (ghs.size() != T) throw std::invalid_argument("lstm: gradient sequence length mismatch");
    const Eigen::Index batch = xs_[0].rows();
    std::vector<Mat> gxs(T);
    Mat dh = Mat::Zero(batch, hidden_);
    Mat dc = Mat::Zero(batch, hidden_);
    for (std::size_t t = T; t-- > 0;) {
      dh += ghs[t];
      const Mat& tc = tanh_c_[t];
      const Mat do_ = dh.cwiseProduct(tc);
      dc += dh.cwiseProduct(o_[t]).cwiseProduct(
          (1.0 - tc.array().square()).matrix());
      const Mat c_prev = t > 0 ? c_[t - 1] : Mat::Zero(batch, hidden_);
      const Mat di = dc.cwiseProduct(g_[t]);
      const Mat df = dc.cwiseProduct(c_prev);
      const Mat dg = dc.cwiseProduct(i_[t]);

      Mat dpre(batch, 4 * hidden_);
      dpre.block(0, 0, batch, hidden_) =
          di.cwiseProduct(i_[t]).cwiseProduct((1.0 - i_[t].array()).matrix());
      dpre.block(0, hidden_, batch, hidden_) =
          df.cwiseProduct(f_[t]).cwiseProduct((1.0 - f_[t].array()).matrix());
      dpre.block(0, 2 * hidden_, batch, hidden_) =
          dg.cwiseProduct((1.0 - g_[t].array().square()).matrix());
      dpre.block(0, 3 * hidden_, batch, hidden_) =
          do_.cwiseProduct(o_[t]).cwiseProduct((1.0 - o_[t].array()).matrix());

      const Mat h_prev = t > 0 ? hs_[t - 1] : Mat::Zero(batch, hidden_);
      w_ih_.grad.noalias() += xs_[t].transpose() * dpre;
      w_hh_.grad.noalias() += h_prev.transpose() * dpre;
      b_.grad.row(0) += dpre.colwise().sum();

      gxs[t] = dpre * w_ih_.value.transpose();
      dh = dpre * w_hh_.value.transpose();
      dc = dc.cwiseProduct(f_[t]);
    }
    return gxs;
  }

  Eigen::Index hidden_size() const { return hidden_; }
  Eigen::Index input_size() const { return w_ih_.value.rows(); }

  void collect(std::vector<Param*>& out) {
    out.push_back(&w_ih_);
    out.push_back(&w_hh_);
    out.push_back(&b_);
  }

 private:
  Eigen::Index hidden_;
  Param w_ih_, w_hh_, b_;
  std::vector<Mat> xs_, i_, f_, g_, o_, c_, tanh_c_, hs_;
};

// Stacked LSTM layers; each layer consumes the full hidden sequence of
// the one below. Initial h and c are zero everywhere.
class LstmStack {
 public:
  LstmStack(Eigen::Index input_size, Eigen::Index hidden_size, std::size_t num_layers,
            const std::string& name) {
    if (num_layers < 1) throw std::invalid_argument("lstm stack: num_layers must be >= 1");
    for (std::size_t l = 0; l < num_layers; ++l) {
      layers_.emplace_back(l == 0 ? input_size : hidden_size, hidden_size,
                           name + ".l" + std::to_string(l));
    }
  }

  void init(std::mt19937_64& eng) {
    for (auto& layer : layers_) layer.init(eng);
  }

  std::vector<Mat> forward(const std::vector<Mat>& xs) {
    std::vector<Mat> seq = xs;
    for (auto& layer : layers_) seq = layer.forward(seq);
    return seq;
  }

  std::vector<Mat> backward(const std::vector<Mat>& ghs) {
    std::vector<Mat> grads = ghs;
    for (std::size_t l = layers_.size(); l-- > 0;) grads = layers_[l].backward(grads);
    return grads;
  }

  Eigen::Index hidden_size() const { return layers_.back().hidden_size(); }
  std::size_t depth() const { return layers_.size(); }

  void collect(std::vector<Param*>& out) {
    for (auto& layer : layers_) layer.collect(out);
  }

 private:
  std::vector<LstmLayer> layers_;
};

enum class Mode { train, eval };

// Inverted dropout: training zeroes entries with probability 1-keep_prob
// and scales survivors by 1/keep_prob; eval passes values through.
class DropoutLayer {
 public:
  DropoutLayer(double keep_prob, std::uint64_t seed)
      : keep_prob_(keep_prob), seed_(seed), eng_(seed) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
      throw std::invalid_argument("dropout: keep_prob must lie in (0,1]");
    }
  }

  void reset(std::uint64_t seed) {
    seed_ = seed;
    eng_.seed(seed);
  }

  std::vector<Mat> forward(const std::vector<Mat>& xs, Mode mode) {
    if (mode == Mode::eval || keep_prob_ >= 1.0) {
      masks_.clear();
      return xs;
    }
    std::bernoulli_distribution keep(keep_prob_);
    masks_.resize(xs.size());
    std::vector<Mat> out(xs.size());
    for (std::size_t s = 0; s < xs.size(); ++s) {
      Mat& mask = masks_[s];
      mask.resize(xs[s].rows(), xs[s].cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c) {
        for (Eigen::Index r = 0; r < mask.rows(); ++r) {
          mask(r, c) = keep(eng_) ? 1.0 / keep_prob_ : 0.0;
        }
      }
      out[s] = xs[s].cwiseProduct(mask);
    }
    return out;
  }

  std::vector<Mat> backward(const std::vector<Mat>& gys) {
    if (masks_.empty()) return gys;  // eval or keep_prob == 1 forward
    std::vector<Mat> gxs(gys.size());
    for (std::size_t s = 0; s < gys.size(); ++s) gxs[s] = gys[s].cwiseProduct(masks_[s]);
    return gxs;
  }

  Mat forward(const Mat& x, Mode mode) { return forward(std::vector<Mat>{x}, mode)[0]; }
  Mat backward(const Mat& gy) { return backward(std::vector<Mat>{gy})[0]; }

  double keep_prob() const { return keep_prob_; }

 private:
  double keep_prob_;
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  std::vector<Mat> masks_;
};

class ReluLayer {
 public:
  std::vector<Mat> forward(const std::vector<Mat>& xs) {
    if (!frozen_) {
      masks_.resize(xs.size());
      for (std::size_t s = 0; s < xs.size(); ++s) {
        masks_[s] = (xs[s].array() > 0.0).cast<double>().matrix();
      }
    } else if (masks_.size() != xs.size()) {
      throw std::invalid_argument("relu: no cached mask matches the frozen forward");
    }
    std::vector<Mat> out(xs.size());
    for (std::size_t s = 0; s < xs.size(); ++s) out[s] = xs[s].cwiseProduct(masks_[s]);
    return out;
  }

  std::vector<Mat> backward(const std::vector<Mat>& gys) {
    std::vector<Mat> gxs(gys.size());
    for (std::size_t s = 0; s < gys.size(); ++s) gxs[s] = gys[s].cwiseProduct(masks_[s]);
    return gxs;
  }

  Mat forward(const Mat& x) { return forward(std::vector<Mat>{x})[0]; }
  Mat backward(const Mat& gy) { return backward(std::vector<Mat>{gy})[0]; }

  // While frozen, forwards reuse the masks of the last unfrozen forward.
  // Gradient checks freeze so finite differences probe the same linear
  // region the analytic gradient belongs to; a kink inside the probe step
  // would otherwise count a mask flip as gradient error.
  void freeze(bool on) { frozen_ = on; }

 private:
  std::vector<Mat> masks_;
  bool frozen_ = false;
};

class SigmoidLayer {
 public:
  Mat forward(const Mat& x) {
    y_ = sigmoid(x);
    return y_;
  }

  Mat backward(const Mat& gy) {
    return gy.cwiseProduct(y_).cwiseProduct((1.0 - y_.array()).matrix());
  }

 private:
  Mat y_;
};

class TanhLayer {
 public:
  Mat forward(const Mat& x) {
    y_ = x.array().tanh().matrix();
    return y_;
  }

  Mat backward(const Mat& gy) { return gy.cwiseProduct((1.0 - y_.array().square()).matrix()); }

 private:
  Mat y_;
};

// Conv output (B samples of [C x L']) -> time-major LSTM input
// (L' steps of [B x C]).
inline std::vector<Mat> sequence_from_conv(const std::vector<Mat>& conv_out) {
  const auto B = static_cast<Eigen::Index>(conv_out.size());
  const Eigen::Index C = conv_out[0].rows();
  const Eigen::Index T = conv_out[0].cols();
  std::vector<Mat> seq(static_cast<std::size_t>(T), Mat(B, C));
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) seq[static_cast<std::size_t>(t)].row(b) = conv_out[b].col(t).transpose();
  }
  return seq;
}

inline std::vector<Mat> conv_grad_from_sequence(const std::vector<Mat>& seq_grad, Eigen::Index batch) {
  const auto T = static_cast<Eigen::Index>(seq_grad.size());
  const Eigen::Index C = seq_grad[0].cols();
  std::vector<Mat> grads(static_cast<std::size_t>(batch), Mat(C, T));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) {
      grads[static_cast<std::size_t>(b)].col(t) = seq_grad[static_cast<std::size_t>(t)].row(b).transpose();
    }
  }
  return grads;
}

}  // namespace lifefuse::nn
