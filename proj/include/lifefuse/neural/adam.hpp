#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lifefuse/neural/layers.hpp"
#include "lifefuse/tensor.hpp"

namespace lifefuse::nn {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

namespace detail {

// Bias-corrected Adam update on a flat span. `step` is the 1-based
// update count after incrementing.
inline void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                        std::size_t step, const AdamHyper& hp) {
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
    v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
  }
}

}  // namespace detail

// Moment state for a single flat parameter tensor.
struct AdamState {
  std::size_t step = 0;
  Tensor first_moment;
  Tensor second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
};

inline void adam_step(Tensor& params, const Tensor& grads, AdamState& state) {
  if (!params.same_shape(grads)) {
    throw std::invalid_argument("adam_step: parameter and gradient shapes differ");
  }
  if (state.step == 0) {
    state.first_moment = Tensor(params.shape, 0.0);
    state.second_moment = Tensor(params.shape, 0.0);
  } else if (!state.first_moment.same_shape(params)) {
    throw std::invalid_argument("adam_step: state was initialized for a different shape");
  }
  ++state.step;
  AdamHyper hp{state.learning_rate, state.beta1, state.beta2, state.epsilon};
  detail::adam_update(params.values.data(), grads.values.data(),
                      state.first_moment.values.data(), state.second_moment.values.data(),
                      params.size(), state.step, hp);
}

// Drives all registered layer parameters with one shared step counter,
// the way a whole network is trained.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Param*> params, AdamHyper hyper = {})
      : params_(std::move(params)), hyper_(hyper) {
    moments_.reserve(params_.size());
    for (const Param* p : params_) {
      moments_.push_back({Mat::Zero(p->value.rows(), p->value.cols()),
                          Mat::Zero(p->value.rows(), p->value.cols())});
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  void step() {
    ++step_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param* p = params_[i];
      detail::adam_update(p->value.data(), p->grad.data(), moments_[i].m.data(),
                          moments_[i].v.data(), static_cast<std::size_t>(p->value.size()), step_,
                          hyper_);
    }
  }

  std::size_t step_count() const { return step_; }
  const AdamHyper& hyper() const { return hyper_; }

 private:
  struct Moment {
    Mat m, v;
  };
  std::vector<Param*> params_;
  std::vector<Moment> moments_;
  AdamHyper hyper_;
  std::size_t step_ = 0;
};

}  // namespace lifefuse::nn
