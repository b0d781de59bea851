#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "lifefuse/errors.hpp"
#include "lifefuse/signal_sim.hpp"

namespace lifefuse::dsp {

enum class EnvelopeSide { upper, lower };
enum class EnvelopeKind { cubic_spline, linear };

struct EmdConfig {
  std::size_t max_imfs = 10;
  double sift_sd_threshold = 0.3;
  std::size_t max_sift_iters = 100;
  EnvelopeKind envelope = EnvelopeKind::cubic_spline;

  void validate() const {
    if (max_imfs < 1) throw std::invalid_argument("EmdConfig: max_imfs must be >= 1");
    if (!(sift_sd_threshold > 0.0)) {
      throw std::invalid_argument("EmdConfig: sift_sd_threshold must be > 0");
    }
    if (max_sift_iters < 1) throw std::invalid_argument("EmdConfig: max_sift_iters must be >= 1");
  }
};

struct EmdResult {
  std::vector<std::vector<double>> imfs;  // ordered high-frequency first
  std::vector<double> residual;
  std::vector<std::size_t> sift_iterations;  // per accepted IMF
  std::vector<bool> sift_converged;          // false where max_sift_iters stopped the sift
};

struct CorrelationSeries {
  std::vector<long> lags;
  std::vector<double> values;
};

// One fusion training sample: per sensor a raw and a smoothed probability
// channel over a G-step window.
struct FusionSample {
  std::array<std::array<std::vector<double>, 2>, 3> branches;
  int label = 0;
  double weight = 1.0;

  std::size_t window() const { return branches[0][0].size(); }
};

namespace detail {

inline std::vector<std::size_t> interior_extrema(const std::vector<double>& s, bool maxima) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double a = s[i - 1], b = s[i], c = s[i + 1];
    const bool hit = maxima ? ((b > a && b >= c) || (b >= a && b > c))
                            : ((b < a && b <= c) || (b <= a && b < c));
    if (hit) idx.push_back(i);
  }
  return idx;
}

inline bool is_monotone(const std::vector<double>& s) {
  bool non_dec = true, non_inc = true;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] < s[i - 1]) non_dec = false;
    if (s[i] > s[i - 1]) non_inc = false;
  }
  return non_dec || non_inc;
}

// Natural cubic spline through (xs, ys); second derivatives vanish at the
// ends. xs must be strictly increasing.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
    const std::size_t n = xs_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;  // two knots degenerate to the straight line
    std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
    diag[0] = 1.0;
    diag[n - 1] = 1.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = xs_[i] - xs_[i - 1];
      const double h1 = xs_[i + 1] - xs_[i];
      diag[i] = 2.0 * (h0 + h1);
      upper[i] = h1;
      rhs[i] = 6.0 * ((ys_[i + 1] - ys_[i]) / h1 - (ys_[i] - ys_[i - 1]) / h0);
    }
    // Thomas solve; the natural rows pin m at both ends to zero.
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double h0 = xs_[i] - xs_[i - 1];
      const double w = h0 / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 1; i-- > 1;) {
      m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
    }
  }

  double eval(double x) const {
    const std::size_t n = xs_.size();
    if (n == 1) return ys_[0];
    const auto it = std::upper_bound(xs_.begin() + 1, xs_.end() - 1, x);
    const auto hi = static_cast<std::size_t>(it - xs_.begin());
    const std::size_t lo = hi - 1;
    const double h = xs_[hi] - xs_[lo];
    const double a = (xs_[hi] - x) / h;
    const double b = (x - xs_[lo]) / h;
    return a * ys_[lo] + b * ys_[hi] +
           ((a * a * a - a) * m_[lo] + (b * b * b - b) * m_[hi]) * h * h / 6.0;
  }

 private:
  std::vector<double> xs_, ys_, m_;
};

enum class EndpointPolicy {
  knot,    // append the signal endpoints themselves as envelope knots
  mirror,  // reflect the first/last interior extremum across each endpoint
};

inline std::vector<double> envelope_impl(const std::vector<double>& signal, EnvelopeSide side,
                                         EnvelopeKind kind, EndpointPolicy policy) {
  const std::size_t n = signal.size();
  if (n < 2) throw DegenerateSignalError("envelope: signal shorter than 2 samples");
  const bool maxima = side == EnvelopeSide::upper;
  const std::vector<std::size_t> ext = interior_extrema(signal, maxima);

  std::vector<double> xs, ys;
  if (ext.empty()) {
    // Monotone (or extremum-free) input: the straight line through the ends.
    xs = {0.0, static_cast<double>(n - 1)};
    ys = {signal.front(), signal.back()};
  } else if (policy == EndpointPolicy::knot) {
    xs.push_back(0.0);
    ys.push_back(signal.front());
    for (std::size_t i : ext) {
      xs.push_back(static_cast<double>(i));
      ys.push_back(signal[i]);
    }
    xs.push_back(static_cast<double>(n - 1));
    ys.push_back(signal.back());
  } else {
    const std::size_t first = ext.front(), last = ext.back();
    const bool front_dominates =
        maxima ? signal.front() > signal[first] : signal.front() < signal[first];
    const bool back_dominates =
        maxima ? signal.back() > signal[last] : signal.back() < signal[last];
    if (front_dominates) {
      xs.push_back(0.0);
      ys.push_back(signal.front());
    } else if (first > 0) {
      xs.push_back(-static_cast<double>(first));
      ys.push_back(signal[first]);
    }
    for (std::size_t i : ext) {
      xs.push_back(static_cast<double>(i));
      ys.push_back(signal[i]);
    }
    if (back_dominates) {
      xs.push_back(static_cast<double>(n - 1));
      ys.push_back(signal.back());
    } else if (last < n - 1) {
      xs.push_back(static_cast<double>(2 * (n - 1) - last));
      ys.push_back(signal[last]);
    }
  }

  std::vector<double> out(n);
  if (kind == EnvelopeKind::linear || xs.size() < 3) {
    std::size_t hi = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i);
      while (hi + 1 < xs.size() && xs[hi] < x) ++hi;
      const double t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
      out[i] = ys[hi - 1] * (1.0 - t) + ys[hi] * t;
    }
  } else {
    CubicSpline spline(xs, ys);
    for (std::size_t i = 0; i < n; ++i) out[i] = spline.eval(static_cast<double>(i));
  }
  return out;
}

inline std::size_t count_zero_crossings(const std::vector<double>& s) {
  std::size_t count = 0;
  int last_sign = 0;
  for (double v : s) {
    const int sign = (v > 0.0) - (v < 0.0);
    if (sign != 0) {
      if (last_sign != 0 && sign != last_sign) ++count;
      last_sign = sign;
    }
  }
  return count;
}

inline constexpr EndpointPolicy kEnvelopeEndpointPolicy = EndpointPolicy::mirror;

}  // namespace detail

inline std::vector<double> envelope(const std::vector<double>& signal, EnvelopeSide side,
                                    EnvelopeKind kind = EnvelopeKind::cubic_spline) {
  return detail::envelope_impl(signal, side, kind, detail::kEnvelopeEndpointPolicy);
}

inline bool is_imf(const std::vector<double>& signal, double tol) {
  if (signal.size() < 4) throw std::invalid_argument("is_imf: signal shorter than 4 samples");
  const std::size_t extrema = detail::interior_extrema(signal, true).size() +
                              detail::interior_extrema(signal, false).size();
  const std::size_t crossings = detail::count_zero_crossings(signal);
  const auto diff = extrema > crossings ? extrema - crossings : crossings - extrema;
  if (diff > 1) return false;

  const std::vector<double> upper = envelope(signal, EnvelopeSide::upper);
  const std::vector<double> lower = envelope(signal, EnvelopeSide::lower);
  double peak = 0.0, worst_mean = 0.0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    peak = std::max(peak, std::abs(signal[i]));
    worst_mean = std::max(worst_mean, std::abs(0.5 * (upper[i] + lower[i])));
  }
  return worst_mean <= tol * peak;
}

inline EmdResult emd_decompose(const std::vector<double>& signal, const EmdConfig& cfg = {}) {
  cfg.validate();
  if (signal.size() < 8) throw std::invalid_argument("emd_decompose: signal shorter than 8 samples");

  EmdResult result;
  result.residual = signal;
  while (result.imfs.size() < cfg.max_imfs) {
    const std::size_t extrema = detail::interior_extrema(result.residual, true).size() +
                                detail::interior_extrema(result.residual, false).size();
    if (detail::is_monotone(result.residual) || extrema < 3) break;

    std::vector<double> h = result.residual;
    std::size_t iters = 0;
    bool converged = false;
    while (iters < cfg.max_sift_iters) {
      ++iters;
      const std::vector<double> upper = detail::envelope_impl(
          h, EnvelopeSide::upper, cfg.envelope, detail::kEnvelopeEndpointPolicy);
      const std::vector<double> lower = detail::envelope_impl(
          h, EnvelopeSide::lower, cfg.envelope, detail::kEnvelopeEndpointPolicy);
      double num = 0.0, den = 0.0;
      std::vector<double> next(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double mean = 0.5 * (upper[i] + lower[i]);
        next[i] = h[i] - mean;
        num += mean * mean;
        den += h[i] * h[i];
      }
      const double sd = den > 0.0 ? num / den : 0.0;
      h = std::move(next);
      if (sd < cfg.sift_sd_threshold && is_imf(h, cfg.sift_sd_threshold)) {
        converged = true;
        break;
      }
    }
    result.sift_iterations.push_back(iters);
    result.sift_converged.push_back(converged);
    for (std::size_t i = 0; i < h.size(); ++i) result.residual[i] -= h[i];
    result.imfs.push_back(std::move(h));
  }
  return result;
}

inline CorrelationSeries cross_correlate(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("cross_correlate: empty input");
  const long nx = static_cast<long>(x.size());
  const long ny = static_cast<long>(y.size());
  CorrelationSeries series;
  series.lags.reserve(nx + ny - 1);
  series.values.reserve(nx + ny - 1);
  // r_xy(m) = sum_n x(n) y(n+m), zero outside either support.
  for (long m = -(nx - 1); m <= ny - 1; ++m) {
    const long n_lo = std::max(0L, -m);
    const long n_hi = std::min(nx - 1, ny - 1 - m);
    double acc = 0.0;
    for (long n = n_lo; n <= n_hi; ++n) acc += x[n] * y[n + m];
    series.lags.push_back(m);
    series.values.push_back(acc);
  }
  return series;
}

inline std::vector<double> moving_average(const std::vector<double>& seq, std::size_t H) {
  if (H < 1) throw std::invalid_argument("moving_average: H must be >= 1");
  if (H % 2 == 0) throw std::invalid_argument("moving_average: H must be odd for a centered window");
  const std::size_t n = seq.size();
  const std::size_t half = (H - 1) / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double sum = 0.0, mn = seq[lo], mx = seq[lo];
    for (std::size_t j = lo; j <= hi; ++j) {
      sum += seq[j];
      mn = std::min(mn, seq[j]);
      mx = std::max(mx, seq[j]);
    }
    // Clamping makes constants exact fixed points and pins the output
    // inside the window's range despite summation round-off.
    out[i] = std::clamp(sum / static_cast<double>(hi - lo + 1), mn, mx);
  }
  return out;
}

inline std::vector<FusionSample> make_windows(const sim::SensorStreams& streams, std::size_t G,
                                              std::size_t H) {
  streams.validate();
  const std::size_t L = streams.size();
  if (G < 1) throw std::invalid_argument("make_windows: G must be >= 1");
  if (L <= G) {
    throw std::invalid_argument("make_windows: stream length " + std::to_string(L) +
                                " must exceed G = " + std::to_string(G));
  }
  std::array<const std::vector<double>*, 3> raw = {&streams.uwb.probs, &streams.infrared.probs,
                                                   &streams.acoustic.probs};
  std::array<std::vector<double>, 3> smooth;
  for (std::size_t s = 0; s < 3; ++s) smooth[s] = moving_average(*raw[s], H);

  std::vector<FusionSample> samples(L - G);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    FusionSample& sample = samples[k];
    for (std::size_t s = 0; s < 3; ++s) {
      sample.branches[s][0].assign(raw[s]->begin() + k, raw[s]->begin() + k + G);
      sample.branches[s][1].assign(smooth[s].begin() + k, smooth[s].begin() + k + G);
    }
    sample.label = streams.labels[k + G - 1];
    sample.weight = 1.0;
  }
  return samples;
}

struct PcaDecomposition {
  Eigen::MatrixXd centered;         // row-centered echo, M x N
  Eigen::MatrixXd slow_components;  // U, M x r
  Eigen::VectorXd singular_values;  // descending
  Eigen::MatrixXd range_profiles;   // V, N x r
};

// Centering subtracts each slow-time row's fast-time mean, so the static
// clutter range profile survives centering and lands in the first principal
// component, where drop_leading can remove it.
inline PcaDecomposition pca_decompose(const sim::EchoMatrix& echo) {
  if (echo.slow_steps < 2 || echo.range_bins < 2 ||
      echo.data.size() != echo.slow_steps * echo.range_bins) {
    throw std::invalid_argument("pca_decompose: malformed echo matrix");
  }
  const auto M = static_cast<Eigen::Index>(echo.slow_steps);
  const auto N = static_cast<Eigen::Index>(echo.range_bins);
  PcaDecomposition dec;
  dec.centered = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>(echo.data.data(), M, N);
  for (Eigen::Index m = 0; m < M; ++m) {
    dec.centered.row(m).array() -= dec.centered.row(m).mean();
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dec.centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  dec.slow_components = svd.matrixU();
  dec.singular_values = svd.singularValues();
  dec.range_profiles = svd.matrixV();
  return dec;
}

inline sim::EchoMatrix pca_clutter_suppress(const sim::EchoMatrix& echo, std::size_t drop_leading,
                                            std::size_t keep) {
  if (keep < 1) throw std::invalid_argument("pca_clutter_suppress: keep must be >= 1");
  const std::size_t rank = std::min(echo.slow_steps, echo.range_bins);
  if (drop_leading + keep > rank) {
    throw std::invalid_argument("pca_clutter_suppress: drop_leading + keep = " +
                                std::to_string(drop_leading + keep) + " exceeds available rank " +
                                std::to_string(rank));
  }
  PcaDecomposition dec = pca_decompose(echo);
  const auto lo = static_cast<Eigen::Index>(drop_leading);
  const auto k = static_cast<Eigen::Index>(keep);
  Eigen::MatrixXd kept = dec.slow_components.middleCols(lo, k) *
                         dec.singular_values.segment(lo, k).asDiagonal() *
                         dec.range_profiles.middleCols(lo, k).transpose();
  sim::EchoMatrix out;
  out.slow_steps = echo.slow_steps;
  out.range_bins = echo.range_bins;
  out.slow_interval_s = echo.slow_interval_s;
  out.fast_interval_s = echo.fast_interval_s;
  out.data.resize(echo.data.size());
  for (std::size_t m = 0; m < echo.slow_steps; ++m) {
    for (std::size_t n = 0; n < echo.range_bins; ++n) {
      out.data[m * echo.range_bins + n] = kept(static_cast<Eigen::Index>(m),
                                               static_cast<Eigen::Index>(n));
    }
  }
  return out;
}

}  // namespace lifefuse::dsp
