#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lifefuse/dsp.hpp"
#include "lifefuse/errors.hpp"
#include "lifefuse/io.hpp"
#include "lifefuse/neural/adam.hpp"
#include "lifefuse/neural/layers.hpp"
#include "lifefuse/neural/losses.hpp"
#include "lifefuse/probability_stream.hpp"
#include "lifefuse/rng.hpp"
#include "lifefuse/signal_sim.hpp"

namespace lifefuse::det {

using io::load_probability_stream;
using nn::Mat;

struct ClassifierConfig {
  std::size_t in_channels = 2;
  std::size_t input_length = 128;
  std::size_t conv_channels = 8;
  std::size_t kernel = 3;
  std::size_t lstm_hidden = 32;
  std::size_t lstm_layers = 2;
  std::size_t dense_hidden = 16;
  std::uint64_t seed = 1;

  void validate() const {
    if (in_channels < 1) throw std::invalid_argument("classifier: in_channels must be >= 1");
    if (conv_channels < 1) throw std::invalid_argument("classifier: conv_channels must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) {
      throw std::invalid_argument("classifier: kernel must be odd and >= 1");
    }
    if (lstm_hidden < 1 || lstm_layers < 1 || dense_hidden < 1) {
      throw std::invalid_argument("classifier: layer widths must be >= 1");
    }
    if (input_length < 2 * kernel - 1) {
      throw std::invalid_argument("classifier: input length " + std::to_string(input_length) +
                                  " too short for two size-" + std::to_string(kernel) +
                                  " convolutions");
    }
  }
};

// Two convolutions, a stacked LSTM read at its last state, and a small
// dense head ending in one sigmoid probability.
class ConvLstmClassifier {
 public:
  explicit ConvLstmClassifier(const ClassifierConfig& cfg)
      : cfg_((cfg.validate(), cfg)),
        conv1_(static_cast<Eigen::Index>(cfg.in_channels),
               static_cast<Eigen::Index>(cfg.conv_channels),
               static_cast<Eigen::Index>(cfg.kernel), "conv1"),
        conv2_(static_cast<Eigen::Index>(cfg.conv_channels),
               static_cast<Eigen::Index>(cfg.conv_channels),
               static_cast<Eigen::Index>(cfg.kernel), "conv2"),
        lstm_(static_cast<Eigen::Index>(cfg.conv_channels),
              static_cast<Eigen::Index>(cfg.lstm_hidden), cfg.lstm_layers, "lstm"),
        hidden_(static_cast<Eigen::Index>(cfg.lstm_hidden),
                static_cast<Eigen::Index>(cfg.dense_hidden), "hidden"),
        out_(static_cast<Eigen::Index>(cfg.dense_hidden), 1, "out") {
    auto eng = make_engine(cfg.seed, RngPurpose::weight_init);
    conv1_.init(eng);
    conv2_.init(eng);
    lstm_.init(eng);
    hidden_.init(eng);
    out_.init(eng);
  }

  // windows: one [in_channels x input_length] matrix per sample.
  Mat forward(const std::vector<Mat>& windows) {
    if (windows.empty()) throw std::invalid_argument("classifier: empty batch");
    for (const Mat& w : windows) {
      if (w.rows() != static_cast<Eigen::Index>(cfg_.in_channels) ||
          w.cols() != static_cast<Eigen::Index>(cfg_.input_length)) {
        throw std::invalid_argument(
            "classifier: window is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
            ", model expects " + std::to_string(cfg_.in_channels) + "x" +
            std::to_string(cfg_.input_length));
      }
    }
    batch_ = static_cast<Eigen::Index>(windows.size());
    auto seq = relu2_.forward(conv2_.forward(relu1_.forward(conv1_.forward(windows))));
    steps_ = seq[0].cols();
    const auto hs = lstm_.forward(nn::sequence_from_conv(seq));
    const Mat head = relu3_.forward(hidden_.forward(hs.back()));
    return sig_.forward(out_.forward(head));
  }

  // dprob: [B x 1] loss gradient; returns per-sample input gradients.
  std::vector<Mat> backward(const Mat& dprob) {
    const Mat dhead = hidden_.backward(relu3_.backward(out_.backward(sig_.backward(dprob))));
    std::vector<Mat> ghs(static_cast<std::size_t>(steps_),
                         Mat::Zero(batch_, static_cast<Eigen::Index>(cfg_.lstm_hidden)));
    ghs.back() = dhead;
    const auto gseq = nn::conv_grad_from_sequence(lstm_.backward(ghs), batch_);
    return conv1_.backward(relu1_.backward(conv2_.backward(relu2_.backward(gseq))));
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    conv1_.collect(out);
    conv2_.collect(out);
    lstm_.collect(out);
    hidden_.collect(out);
    out_.collect(out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto* p : params()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  nn::Conv1dLayer conv1_, conv2_;
  nn::ReluLayer relu1_, relu2_, relu3_;
  nn::LstmStack lstm_;
  nn::DenseLayer hidden_, out_;
  nn::SigmoidLayer sig_;
  Eigen::Index batch_ = 0;
  Eigen::Index steps_ = 0;
};

struct LabeledWindow {
  Mat channels;
  int label = 0;
};

struct DetectorTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 16;
  double learning_rate = 1e-2;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct DetectorTrainResult {
  std::vector<io::HistoryRecord> history;
  double test_accuracy = 0.0;
};

namespace detail {

inline double eval_loss(ConvLstmClassifier& net, const std::vector<LabeledWindow>& set,
                        const std::vector<std::size_t>& indices) {
  double total = 0.0;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::size_t n = std::min(chunk, indices.size() - start);
    std::vector<Mat> windows;
    Mat target(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) {
      windows.push_back(set[indices[start + i]].channels);
      target(static_cast<Eigen::Index>(i), 0) = set[indices[start + i]].label;
    }
    total += nn::weighted_bce(net.forward(windows), target).loss * static_cast<double>(n);
  }
  return total / static_cast<double>(indices.size());
}

inline double eval_accuracy(ConvLstmClassifier& net, const std::vector<LabeledWindow>& set,
                            const std::vector<std::size_t>& indices) {
  std::size_t correct = 0;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::size_t n = std::min(chunk, indices.size() - start);
    std::vector<Mat> windows;
    for (std::size_t i = 0; i < n; ++i) windows.push_back(set[indices[start + i]].channels);
    const Mat prob = net.forward(windows);
    for (std::size_t i = 0; i < n; ++i) {
      const int pred = prob(static_cast<Eigen::Index>(i), 0) > 0.5 ? 1 : 0;
      if (pred == set[indices[start + i]].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace detail

// Shuffled 80/20 split, mini-batch Adam on unweighted BCE. The windows
// here come from many independent recordings, so a random split does
// not leak overlapping context the way a single-stream split would.
inline DetectorTrainResult train_classifier(ConvLstmClassifier& net,
                                            const std::vector<LabeledWindow>& samples,
                                            const DetectorTrainConfig& cfg) {
  if (samples.size() < 2 * cfg.batch) {
    throw std::invalid_argument("classifier training: need at least " +
                                std::to_string(2 * cfg.batch) + " samples, got " +
                                std::to_string(samples.size()));
  }
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    throw std::invalid_argument("classifier training: test_fraction must lie in (0,1)");
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_eng = make_engine(cfg.seed, RngPurpose::shuffle);
  std::shuffle(order.begin(), order.end(), shuffle_eng);
  const auto test_count =
      static_cast<std::size_t>(static_cast<double>(samples.size()) * cfg.test_fraction);
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + test_count);
  std::vector<std::size_t> train_idx(order.begin() + test_count, order.end());

  nn::AdamOptimizer opt(net.params(), {cfg.learning_rate});
  DetectorTrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_eng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, train_idx.size() - start);
      std::vector<Mat> windows;
      Mat target(static_cast<Eigen::Index>(n), 1);
      for (std::size_t i = 0; i < n; ++i) {
        windows.push_back(samples[train_idx[start + i]].channels);
        target(static_cast<Eigen::Index>(i), 0) = samples[train_idx[start + i]].label;
      }
      opt.zero_grad();
      const Mat prob = net.forward(windows);
      const auto loss = nn::weighted_bce(prob, target);
      if (!std::isfinite(loss.loss)) {
        throw NumericalError("classifier training: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      net.backward(loss.grad);
      opt.step();
      epoch_loss += loss.loss;
      ++batches;
    }
    io::HistoryRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(batches);
    rec.test_loss = detail::eval_loss(net, samples, test_idx);
    result.history.push_back(rec);
  }
  result.test_accuracy = detail::eval_accuracy(net, samples, test_idx);
  return result;
}

// ---- UWB branch ----

inline std::size_t max_variance_bin(const sim::EchoMatrix& echo) {
  if (echo.slow_steps < 2) throw std::invalid_argument("max_variance_bin: need >= 2 slow steps");
  double best = -1.0;
  std::size_t best_bin = 0;
  for (std::size_t n = 0; n < echo.range_bins; ++n) {
    double mean = 0.0;
    for (std::size_t m = 0; m < echo.slow_steps; ++m) mean += echo.at(m, n);
    mean /= static_cast<double>(echo.slow_steps);
    double var = 0.0;
    for (std::size_t m = 0; m < echo.slow_steps; ++m) {
      const double d = echo.at(m, n) - mean;
      var += d * d;
    }
    if (var > best) {
      best = var;
      best_bin = n;
    }
  }
  return best_bin;
}

// Clutter-suppressed maximum-variance range bin as a slow-time series.
inline std::vector<double> uwb_vital_slowtime(const sim::EchoMatrix& echo,
                                              std::size_t drop_leading = 1,
                                              std::size_t keep = 5) {
  const std::size_t rank = std::min(echo.slow_steps, echo.range_bins);
  if (rank <= drop_leading) {
    throw std::invalid_argument("uwb slow-time: echo rank " + std::to_string(rank) +
                                " leaves nothing after dropping " + std::to_string(drop_leading) +
                                " leading components");
  }
  const sim::EchoMatrix suppressed =
      dsp::pca_clutter_suppress(echo, drop_leading, std::min(keep, rank - drop_leading));
  const std::size_t bin = max_variance_bin(suppressed);
  std::vector<double> slow(echo.slow_steps);
  for (std::size_t m = 0; m < echo.slow_steps; ++m) slow[m] = suppressed.at(m, bin);
  return slow;
}

// Channel 0 tiles the transmitted pulse across the window; channel 1 is
// the standardized slow-time segment.
inline Mat uwb_window_channels(const std::vector<double>& slow, std::size_t start,
                               std::size_t window, const sim::PulseWaveform& pulse) {
  if (pulse.samples.empty()) throw std::invalid_argument("uwb window: empty pulse");
  if (start + window > slow.size()) {
    throw std::invalid_argument("uwb window: segment extends past the slow-time series");
  }
  Mat channels(2, static_cast<Eigen::Index>(window));
  double mean = 0.0;
  for (std::size_t i = 0; i < window; ++i) mean += slow[start + i];
  mean /= static_cast<double>(window);
  double var = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double d = slow[start + i] - mean;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / static_cast<double>(window));
  for (std::size_t i = 0; i < window; ++i) {
    channels(0, static_cast<Eigen::Index>(i)) = pulse.samples[i % pulse.samples.size()];
    channels(1, static_cast<Eigen::Index>(i)) =
        std_dev > 0.0 ? (slow[start + i] - mean) / std_dev : 0.0;
  }
  return channels;
}

inline std::vector<Mat> uwb_window_features(const sim::EchoMatrix& echo,
                                            const sim::PulseWaveform& pulse, std::size_t window,
                                            std::size_t stride) {
  if (window < 2) throw std::invalid_argument("uwb features: window must be >= 2");
  if (stride < 1) throw std::invalid_argument("uwb features: stride must be >= 1");
  if (window > echo.slow_steps) {
    throw std::invalid_argument("uwb features: window " + std::to_string(window) +
                                " exceeds slow-time length " + std::to_string(echo.slow_steps));
  }
  const auto slow = uwb_vital_slowtime(echo);
  std::vector<Mat> features;
  for (std::size_t start = 0; start + window <= slow.size(); start += stride) {
    features.push_back(uwb_window_channels(slow, start, window, pulse));
  }
  return features;
}

inline ProbabilityStream uwb_detect(const sim::EchoMatrix& echo, const sim::PulseWaveform& pulse,
                                    ConvLstmClassifier& model, std::size_t window) {
  if (window > echo.slow_steps) {
    throw std::invalid_argument("uwb_detect: window " + std::to_string(window) +
                                " exceeds slow-time length " + std::to_string(echo.slow_steps));
  }
  if (model.config().in_channels != 2 || model.config().input_length != window) {
    throw std::invalid_argument("uwb_detect: model expects " +
                                std::to_string(model.config().in_channels) + "x" +
                                std::to_string(model.config().input_length) +
                                " windows, requested 2x" + std::to_string(window));
  }
  const auto slow = uwb_vital_slowtime(echo);

  ProbabilityStream out;
  out.timestamps.resize(echo.slow_steps);
  out.probs.assign(echo.slow_steps, 0.5);  // leading pad before the first full window
  out.labels.assign(echo.slow_steps, 0);
  for (std::size_t m = 0; m < echo.slow_steps; ++m) {
    out.timestamps[m] = static_cast<double>(m) * echo.slow_interval_s;
  }

  std::vector<Mat> windows;
  windows.reserve(echo.slow_steps - window + 1);
  for (std::size_t m = window - 1; m < echo.slow_steps; ++m) {
    windows.push_back(uwb_window_channels(slow, m - window + 1, window, pulse));
  }
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    const std::size_t n = std::min(chunk, windows.size() - start);
    std::vector<Mat> batch(windows.begin() + static_cast<std::ptrdiff_t>(start),
                           windows.begin() + static_cast<std::ptrdiff_t>(start + n));
    const Mat prob = model.forward(batch);
    for (std::size_t i = 0; i < n; ++i) {
      out.probs[window - 1 + start + i] = prob(static_cast<Eigen::Index>(i), 0);
    }
  }
  return out;
}

// ---- acoustic branch ----

// Four sub-bands from a cascade of widening moving averages; the bands
// sum back to the input exactly.
inline std::vector<std::vector<double>> subband_split(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("subband_split: empty input");
  const auto ma5 = dsp::moving_average(x, 5);
  const auto ma21 = dsp::moving_average(x, 21);
  const auto ma81 = dsp::moving_average(x, 81);
  std::vector<std::vector<double>> bands(4, std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    bands[0][i] = x[i] - ma5[i];
    bands[1][i] = ma5[i] - ma21[i];
    bands[2][i] = ma21[i] - ma81[i];
    bands[3][i] = ma81[i];
  }
  return bands;
}

inline constexpr double kSimilaritySlope = 10.0;

// Mean normalized peak cross-correlation over all segment pairs,
// mapped so high mutual similarity (no independent source) gives a low
// life probability.
inline double acoustic_correlation_detect(const std::vector<std::vector<double>>& segments,
                                          double threshold = 0.5) {
  if (segments.size() < 2) {
    throw std::invalid_argument("acoustic correlation: need at least 2 segments");
  }
  const std::size_t len = segments[0].size();
  if (len == 0) throw std::invalid_argument("acoustic correlation: empty segments");
  for (const auto& s : segments) {
    if (s.size() != len) {
      throw std::invalid_argument("acoustic correlation: segment lengths differ (" +
                                  std::to_string(s.size()) + " vs " + std::to_string(len) + ")");
    }
  }

  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < segments.size(); ++a) {
    for (std::size_t b = a + 1; b < segments.size(); ++b) {
      double ea = 0.0, eb = 0.0;
      for (double v : segments[a]) ea += v * v;
      for (double v : segments[b]) eb += v * v;
      double similarity = 0.0;
      if (ea > 0.0 && eb > 0.0) {
        const auto corr = dsp::cross_correlate(segments[a], segments[b]);
        double peak = 0.0;
        for (double v : corr.values) peak = std::max(peak, std::abs(v));
        similarity = peak / std::sqrt(ea * eb);
      }
      total += similarity;
      ++pairs;
    }
  }
  const double s = total / static_cast<double>(pairs);
  const double dissimilarity = std::clamp(1.0 - s, 0.0, 1.0);
  return 1.0 / (1.0 + std::exp(-(dissimilarity - threshold) * kSimilaritySlope));
}

inline double acoustic_cnn_detect(const std::vector<double>& window, ConvLstmClassifier& model) {
  if (model.config().in_channels != 1) {
    throw std::invalid_argument("acoustic_cnn_detect: model must take a single channel");
  }
  if (window.size() != model.config().input_length) {
    throw std::invalid_argument("acoustic_cnn_detect: window length " +
                                std::to_string(window.size()) + " does not match model input " +
                                std::to_string(model.config().input_length));
  }
  Mat channels(1, static_cast<Eigen::Index>(window.size()));
  for (std::size_t i = 0; i < window.size(); ++i) {
    channels(0, static_cast<Eigen::Index>(i)) = window[i];
  }
  return model.forward({channels})(0, 0);
}

}  // namespace lifefuse::det
