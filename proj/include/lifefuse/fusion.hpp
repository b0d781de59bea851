#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lifefuse/dsp.hpp"
#include "lifefuse/errors.hpp"
#include "lifefuse/io.hpp"
#include "lifefuse/neural/adam.hpp"
#include "lifefuse/neural/grad_check.hpp"
#include "lifefuse/neural/layers.hpp"
#include "lifefuse/neural/losses.hpp"
#include "lifefuse/rng.hpp"

namespace lifefuse::fusion {

using dsp::FusionSample;
using nn::Mat;
using nn::Mode;

enum class LossKind { bce, mse };

// Architecture and training knobs for the three-branch fusion network.
// `window` is the G-step input span shared by all branches; the derived
// defaults follow hidden sizes of 3G and 2G with a 2G/G/G:2 dense chain.
struct FusionConfig {
  std::size_t window = 64;
  std::size_t smooth_width = 5;  // moving-average width used when windowing streams
  std::size_t conv_channels = 8;
  std::size_t kernel = 3;
  std::size_t branch_lstm_layers = 3;
  std::size_t branch_hidden = 64;
  std::size_t fusion_hidden_1 = 192;
  std::size_t fusion_hidden_2 = 128;
  std::vector<std::size_t> dense_widths{128, 64, 32};
  double keep_prob = 0.8;
  LossKind loss = LossKind::bce;
  std::size_t epochs = 20;
  std::size_t batch = 16;
  std::array<double, 3> sensor_weights{1.0, 1.0, 1.0};
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  static FusionConfig defaults(std::size_t G) {
    FusionConfig cfg;
    cfg.window = G;
    cfg.branch_hidden = G;
    cfg.fusion_hidden_1 = 3 * G;
    cfg.fusion_hidden_2 = 2 * G;
    cfg.dense_widths = {2 * G, G, G / 2};
    return cfg;
  }

  static FusionConfig standard() { return defaults(64); }

  // The shape used by the parameter sweep: G=32 windows and MSE loss.
  static FusionConfig experiment() {
    FusionConfig cfg = defaults(32);
    cfg.loss = LossKind::mse;
    return cfg;
  }

  void validate() const {
    if (window < 8 || window > 1024) {
      throw std::invalid_argument("FusionConfig: window " + std::to_string(window) +
                                  " out of [8, 1024]");
    }
    if (kernel < 1 || kernel % 2 == 0) {
      throw std::invalid_argument("FusionConfig: kernel " + std::to_string(kernel) +
                                  " must be odd");
    }
    if (window < kernel) {
      throw std::invalid_argument("FusionConfig: window shorter than convolution kernel");
    }
    if (conv_channels < 1) throw std::invalid_argument("FusionConfig: conv stage width must be >= 1");
    if (branch_lstm_layers < 1) {
      throw std::invalid_argument("FusionConfig: branch LSTM stage needs >= 1 layer");
    }
    if (branch_hidden < 1) {
      throw std::invalid_argument("FusionConfig: branch LSTM stage width must be >= 1");
    }
    if (fusion_hidden_1 < 1 || fusion_hidden_2 < 1) {
      throw std::invalid_argument("FusionConfig: fusion LSTM stage width must be >= 1");
    }
    if (dense_widths.empty()) {
      throw std::invalid_argument("FusionConfig: dense stage needs at least one width");
    }
    for (std::size_t i = 0; i < dense_widths.size(); ++i) {
      if (dense_widths[i] < 1) {
        throw std::invalid_argument("FusionConfig: dense stage " + std::to_string(i) +
                                    " width must be >= 1");
      }
      if (i > 0 && dense_widths[i] >= dense_widths[i - 1]) {
        throw std::invalid_argument(
            "FusionConfig: dense stage " + std::to_string(i) + " width " +
            std::to_string(dense_widths[i]) + " does not decrease from " +
            std::to_string(dense_widths[i - 1]));
      }
    }
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
      throw std::invalid_argument("FusionConfig: keep_prob must be in (0, 1]");
    }
    if (smooth_width < 1 || smooth_width % 2 == 0) {
      throw std::invalid_argument("FusionConfig: smooth_width must be odd");
    }
    if (epochs < 1) throw std::invalid_argument("FusionConfig: epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("FusionConfig: batch must be >= 1");
    for (std::size_t s = 0; s < 3; ++s) {
      if (!(sensor_weights[s] >= 0.0 && sensor_weights[s] <= 1.0)) {
        throw std::invalid_argument("FusionConfig: sensor weight " + std::to_string(s) +
                                    " out of [0, 1]");
      }
    }
    if (!(learning_rate > 0.0)) {
      throw std::invalid_argument("FusionConfig: learning_rate must be > 0");
    }
  }
};

namespace detail {

inline std::uint64_t dropout_seed(std::uint64_t master, std::uint64_t layer_index) {
  std::uint64_t state =
      derive_seed(master, RngPurpose::dropout) + layer_index * 0x9e3779b97f4a7c15ULL;
  return splitmix64(state);
}

inline Eigen::Index ci(std::size_t v) { return static_cast<Eigen::Index>(v); }

inline std::vector<nn::DenseLayer> make_dense_chain(const FusionConfig& cfg) {
  std::vector<nn::DenseLayer> chain;
  Eigen::Index in = ci(cfg.fusion_hidden_2);
  for (std::size_t i = 0; i < cfg.dense_widths.size(); ++i) {
    chain.emplace_back(in, ci(cfg.dense_widths[i]), "dense" + std::to_string(i));
    in = ci(cfg.dense_widths[i]);
  }
  return chain;
}

}  // namespace detail

// Three parallel conv -> LSTM branches (one per sensor), concatenated along
// the feature axis after per-branch reliability scaling, then two fusion
// LSTM layers whose last state feeds a shrinking dense chain and a sigmoid.
class FusionNetwork {
 public:
  explicit FusionNetwork(FusionConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        conv_{nn::Conv1dLayer(2, detail::ci(cfg_.conv_channels), detail::ci(cfg_.kernel),
                              "branch0.conv"),
              nn::Conv1dLayer(2, detail::ci(cfg_.conv_channels), detail::ci(cfg_.kernel),
                              "branch1.conv"),
              nn::Conv1dLayer(2, detail::ci(cfg_.conv_channels), detail::ci(cfg_.kernel),
                              "branch2.conv")},
        branch_drop_{nn::DropoutLayer(cfg_.keep_prob, detail::dropout_seed(cfg_.seed, 0)),
                     nn::DropoutLayer(cfg_.keep_prob, detail::dropout_seed(cfg_.seed, 1)),
                     nn::DropoutLayer(cfg_.keep_prob, detail::dropout_seed(cfg_.seed, 2))},
        branch_lstm_{nn::LstmStack(detail::ci(cfg_.conv_channels), detail::ci(cfg_.branch_hidden),
                                   cfg_.branch_lstm_layers, "branch0.lstm"),
                     nn::LstmStack(detail::ci(cfg_.conv_channels), detail::ci(cfg_.branch_hidden),
                                   cfg_.branch_lstm_layers, "branch1.lstm"),
                     nn::LstmStack(detail::ci(cfg_.conv_channels), detail::ci(cfg_.branch_hidden),
                                   cfg_.branch_lstm_layers, "branch2.lstm")},
        fusion1_(detail::ci(3 * cfg_.branch_hidden), detail::ci(cfg_.fusion_hidden_1), "fusion1"),
        fusion2_(detail::ci(cfg_.fusion_hidden_1), detail::ci(cfg_.fusion_hidden_2), "fusion2"),
        head_drop_(cfg_.keep_prob, detail::dropout_seed(cfg_.seed, 3)),
        dense_(detail::make_dense_chain(cfg_)),
        dense_relu_(dense_.size()),
        out_(detail::ci(cfg_.dense_widths.back()), 1, "out") {
    auto eng = make_engine(cfg_.seed, RngPurpose::weight_init);
    for (std::size_t b = 0; b < 3; ++b) {
      conv_[b].init(eng);
      branch_lstm_[b].init(eng);
    }
    fusion1_.init(eng);
    fusion2_.init(eng);
    for (auto& layer : dense_) layer.init(eng);
    out_.init(eng);
  }

  // One probability per sample, shape [B x 1].
  Mat forward(const std::vector<const FusionSample*>& batch, Mode mode) {
    if (batch.empty()) throw std::invalid_argument("fusion: empty batch");
    const std::size_t G = cfg_.window;
    const auto B = static_cast<Eigen::Index>(batch.size());

    std::array<std::vector<Mat>, 3> inputs;
    for (std::size_t b = 0; b < 3; ++b) inputs[b].resize(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const FusionSample& sample = *batch[s];
      for (std::size_t b = 0; b < 3; ++b) {
        const auto& raw = sample.branches[b][0];
        const auto& smooth = sample.branches[b][1];
        if (raw.size() != G || smooth.size() != G) {
          throw std::invalid_argument("fusion: sample window " + std::to_string(raw.size()) +
                                      " does not match configured window " + std::to_string(G));
        }
        // Probabilities are centered at the midpoint before the conv stage.
        // The raw streams carry a DC level near 0.5 that dwarfs the
        // label-dependent variation; without centering, deep recurrent
        // stacks settle into an input-independent fixed point and training
        // can sit at the constant-prediction loss for many epochs.
        Mat x(2, detail::ci(G));
        for (std::size_t t = 0; t < G; ++t) {
          x(0, detail::ci(t)) = raw[t] - 0.5;
          x(1, detail::ci(t)) = smooth[t] - 0.5;
        }
        inputs[b][s] = std::move(x);
      }
    }

    std::array<std::vector<Mat>, 3> branch_seq;
    for (std::size_t b = 0; b < 3; ++b) {
      auto maps = conv_[b].forward(inputs[b]);
      maps = branch_relu_[b].forward(maps);
      maps = branch_drop_[b].forward(maps, mode);
      branch_seq[b] = branch_lstm_[b].forward(nn::sequence_from_conv(maps));
    }

    seq_len_ = branch_seq[0].size();
    const Eigen::Index H = detail::ci(cfg_.branch_hidden);
    std::vector<Mat> concat(seq_len_);
    for (std::size_t t = 0; t < seq_len_; ++t) {
      Mat cat(B, 3 * H);
      for (std::size_t b = 0; b < 3; ++b) {
        cat.block(0, detail::ci(b) * H, B, H) = cfg_.sensor_weights[b] * branch_seq[b][t];
      }
      concat[t] = std::move(cat);
    }

    const auto f1 = fusion1_.forward(concat);
    const auto f2 = fusion2_.forward(f1);
    Mat head = head_drop_.forward(f2.back(), mode);
    for (std::size_t i = 0; i < dense_.size(); ++i) {
      head = dense_relu_[i].forward(dense_[i].forward(head));
    }
    return sig_.forward(out_.forward(head));
  }

  Mat forward(const std::vector<FusionSample>& batch, Mode mode) {
    std::vector<const FusionSample*> ptrs(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) ptrs[i] = &batch[i];
    return forward(ptrs, mode);
  }

  double forward_one(const FusionSample& sample) {
    return forward(std::vector<const FusionSample*>{&sample}, Mode::eval)(0, 0);
  }

  // gprob is the loss gradient at the sigmoid output, shape [B x 1].
  // Parameter gradients accumulate; input gradients are discarded.
  void backward(const Mat& gprob) {
    Mat g = out_.backward(sig_.backward(gprob));
    for (std::size_t i = dense_.size(); i-- > 0;) {
      g = dense_[i].backward(dense_relu_[i].backward(g));
    }
    g = head_drop_.backward(g);

    std::vector<Mat> ghs(seq_len_,
                         Mat::Zero(g.rows(), detail::ci(cfg_.fusion_hidden_2)));
    ghs.back() = g;
    const auto gcat = fusion1_.backward(fusion2_.backward(ghs));

    const Eigen::Index H = detail::ci(cfg_.branch_hidden);
    for (std::size_t b = 0; b < 3; ++b) {
      std::vector<Mat> gseq(seq_len_);
      for (std::size_t t = 0; t < seq_len_; ++t) {
        gseq[t] = cfg_.sensor_weights[b] * gcat[t].block(0, detail::ci(b) * H, g.rows(), H);
      }
      auto gmaps = nn::conv_grad_from_sequence(branch_lstm_[b].backward(gseq), g.rows());
      gmaps = branch_drop_[b].backward(gmaps);
      conv_[b].backward(branch_relu_[b].backward(gmaps));
    }
  }

  std::vector<nn::Param*> params() {
    std::vector<nn::Param*> out;
    for (std::size_t b = 0; b < 3; ++b) {
      conv_[b].collect(out);
      branch_lstm_[b].collect(out);
    }
    fusion1_.collect(out);
    fusion2_.collect(out);
    for (auto& layer : dense_) layer.collect(out);
    out_.collect(out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t total = 0;
    for (const nn::Param* p : params()) total += static_cast<std::size_t>(p->value.size());
    return total;
  }

  // Re-arms every dropout mask stream; with a fixed seed, repeated
  // train-mode forwards replay identical masks.
  void reset_dropout(std::uint64_t seed) {
    for (std::size_t b = 0; b < 3; ++b) branch_drop_[b].reset(detail::dropout_seed(seed, b));
    head_drop_.reset(detail::dropout_seed(seed, 3));
  }

  // Pins every ReLU mask to the last unfrozen forward (see ReluLayer::freeze).
  void freeze_activations(bool on) {
    for (auto& relu : branch_relu_) relu.freeze(on);
    for (auto& relu : dense_relu_) relu.freeze(on);
  }

  const FusionConfig& config() const { return cfg_; }

 private:
  FusionConfig cfg_;
  std::array<nn::Conv1dLayer, 3> conv_;
  std::array<nn::ReluLayer, 3> branch_relu_;
  std::array<nn::DropoutLayer, 3> branch_drop_;
  std::array<nn::LstmStack, 3> branch_lstm_;
  nn::LstmLayer fusion1_, fusion2_;
  nn::DropoutLayer head_drop_;
  std::vector<nn::DenseLayer> dense_;
  std::vector<nn::ReluLayer> dense_relu_;
  nn::DenseLayer out_;
  nn::SigmoidLayer sig_;
  std::size_t seq_len_ = 0;
};

namespace detail {

inline nn::LossResult sample_loss(const FusionConfig& cfg, const Mat& prob,
                                  const std::vector<const FusionSample*>& batch) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  Mat target(B, 1), weight(B, 1);
  for (Eigen::Index i = 0; i < B; ++i) {
    target(i, 0) = static_cast<double>(batch[static_cast<std::size_t>(i)]->label);
    weight(i, 0) = batch[static_cast<std::size_t>(i)]->weight;
  }
  if (cfg.loss == LossKind::bce) return nn::weighted_bce(prob, target, weight);
  return nn::mse(prob, target);
}

inline std::vector<const FusionSample*> gather(const std::vector<FusionSample>& samples,
                                               const std::vector<std::size_t>& idx,
                                               std::size_t begin, std::size_t end) {
  std::vector<const FusionSample*> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(&samples[idx[i]]);
  return out;
}

inline double eval_loss(FusionNetwork& net, const std::vector<FusionSample>& samples,
                        const std::vector<std::size_t>& idx) {
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  for (std::size_t begin = 0; begin < idx.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, idx.size());
    const auto batch = gather(samples, idx, begin, end);
    const Mat prob = net.forward(batch, Mode::eval);
    total += sample_loss(net.config(), prob, batch).loss * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace detail

struct SplitIndices {
  std::vector<std::size_t> train, test;
};

// Chronological 80/20 split over windowed samples. Sample k spans stream
// steps [k, k+G); windows straddling the cut are dropped so no step feeds
// both halves.
inline SplitIndices chronological_split(std::size_t n_samples, std::size_t G,
                                        double train_fraction = 0.8) {
  if (n_samples < 1) throw std::invalid_argument("chronological_split: no samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("chronological_split: train_fraction must be in (0, 1)");
  }
  const std::size_t L = n_samples + G;
  const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(L)));
  SplitIndices split;
  for (std::size_t k = 0; k < n_samples; ++k) {
    if (k + G <= cut) {
      split.train.push_back(k);
    } else if (k >= cut) {
      split.test.push_back(k);
    }
  }
  return split;
}

struct TrainResult {
  std::vector<io::HistoryRecord> history;  // entry 0 is the pre-training loss
  SplitIndices split;
};

inline TrainResult train(FusionNetwork& net, const std::vector<FusionSample>& samples) {
  const FusionConfig& cfg = net.config();
  if (samples.size() < 2 * cfg.batch) {
    throw std::invalid_argument("fusion training: needs at least " +
                                std::to_string(2 * cfg.batch) + " samples, got " +
                                std::to_string(samples.size()));
  }
  TrainResult res;
  res.split = chronological_split(samples.size(), cfg.window);
  if (res.split.train.size() < cfg.batch || res.split.test.empty()) {
    throw std::invalid_argument("fusion training: chronological split left too few samples");
  }

  nn::AdamOptimizer opt(net.params(), {cfg.learning_rate});
  auto shuffle_eng = make_engine(cfg.seed, RngPurpose::shuffle);

  res.history.push_back({0, detail::eval_loss(net, samples, res.split.train),
                         detail::eval_loss(net, samples, res.split.test)});

  std::vector<std::size_t> order = res.split.train;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_eng);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch, ++batch_index) {
      const std::size_t end = std::min(begin + cfg.batch, order.size());
      const auto batch = detail::gather(samples, order, begin, end);
      const Mat prob = net.forward(batch, Mode::train);
      const auto loss = detail::sample_loss(cfg, prob, batch);
      if (!std::isfinite(loss.loss)) {
        throw NumericalError("fusion training: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      opt.zero_grad();
      net.backward(loss.grad);
      opt.step();
      total += loss.loss * static_cast<double>(end - begin);
    }
    res.history.push_back({epoch, total / static_cast<double>(order.size()),
                           detail::eval_loss(net, samples, res.split.test)});
  }
  return res;
}

// Trapezoidal ROC area over all unique score thresholds; tied scores move
// the operating point diagonally, matching the rank-statistic AUC with
// half credit for ties.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("roc_auc: scores and labels must be non-empty and equal length");
  }
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("roc_auc: needs at least one sample of each class");
  }

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double area = 0.0;
  double tpr = 0.0, fpr = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t tp = 0, fp = 0;
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) ++tp; else ++fp;
      ++j;
    }
    const double next_tpr = tpr + static_cast<double>(tp) / static_cast<double>(pos);
    const double next_fpr = fpr + static_cast<double>(fp) / static_cast<double>(neg);
    area += (next_fpr - fpr) * (tpr + next_tpr) / 2.0;
    tpr = next_tpr;
    fpr = next_fpr;
    i = j;
  }
  return area;
}

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double roc_auc = 0.0;
};

struct FusionEvaluation {
  Metrics metrics;
  std::vector<double> predicted;
  std::vector<int> truth;
};

// Threshold classifies as life only when the probability strictly exceeds
// it, so an exactly-borderline score falls to the no-life class.
inline FusionEvaluation evaluate(FusionNetwork& net, const std::vector<FusionSample>& samples,
                                 double threshold = 0.5) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty sample list");
  FusionEvaluation ev;
  ev.predicted.reserve(samples.size());
  ev.truth.reserve(samples.size());

  constexpr std::size_t kChunk = 64;
  double loss_total = 0.0;
  std::vector<const FusionSample*> batch;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, samples.size());
    batch.clear();
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&samples[i]);
    const Mat prob = net.forward(batch, Mode::eval);
    loss_total += detail::sample_loss(net.config(), prob, batch).loss *
                  static_cast<double>(end - begin);
    for (Eigen::Index r = 0; r < prob.rows(); ++r) {
      ev.predicted.push_back(prob(r, 0));
      ev.truth.push_back(batch[static_cast<std::size_t>(r)]->label);
    }
  }
  ev.metrics.loss = loss_total / static_cast<double>(samples.size());

  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < ev.predicted.size(); ++i) {
    const int pred = ev.predicted[i] > threshold ? 1 : 0;
    if (pred == ev.truth[i]) ++correct;
    if (pred == 1 && ev.truth[i] == 1) ++tp;
    if (pred == 1 && ev.truth[i] == 0) ++fp;
    if (pred == 0 && ev.truth[i] == 1) ++fn;
  }
  ev.metrics.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  ev.metrics.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  ev.metrics.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  ev.metrics.roc_auc = roc_auc(ev.predicted, ev.truth);
  return ev;
}

// Central-difference check of the assembled network, dropout included.
// Dropout masks are replayed from a fixed seed and ReLU masks are frozen
// from the baseline forward, so the probed loss is the differentiable
// branch the analytic gradient belongs to.
inline nn::GradCheckResult fusion_grad_check(const FusionConfig& cfg, std::size_t batch,
                                             std::uint64_t data_seed, double eps = 1e-5) {
  if (batch < 1) throw std::invalid_argument("fusion_grad_check: batch must be >= 1");
  FusionNetwork net(cfg);
  std::mt19937_64 eng(data_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<FusionSample> samples(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    for (auto& branch : samples[s].branches) {
      for (auto& channel : branch) {
        channel.resize(cfg.window);
        for (double& v : channel) v = unit(eng);
      }
    }
    samples[s].label = static_cast<int>(s % 2);
    samples[s].weight = s % 2 == 0 ? 1.0 : 0.7;
  }
  std::vector<const FusionSample*> ptrs(batch);
  for (std::size_t s = 0; s < batch; ++s) ptrs[s] = &samples[s];

  const std::uint64_t mask_seed = data_seed + 1;
  auto loss_fn = [&]() {
    net.reset_dropout(mask_seed);
    const Mat prob = net.forward(ptrs, Mode::train);
    return detail::sample_loss(cfg, prob, ptrs).loss;
  };

  net.reset_dropout(mask_seed);
  const Mat prob = net.forward(ptrs, Mode::train);
  const auto loss = detail::sample_loss(cfg, prob, ptrs);
  auto params = net.params();
  for (nn::Param* p : params) p->zero_grad();
  net.backward(loss.grad);
  net.freeze_activations(true);
  return nn::check_gradients(params, loss_fn, eps);
}

// Belief mass over {life, no-life, unknown}; the unknown element absorbs
// whatever reliability the source lacks.
struct MassFunction {
  double life = 0.0;
  double none = 0.0;
  double unknown = 1.0;

  void validate() const {
    if (life < 0.0 || none < 0.0 || unknown < 0.0) {
      throw std::invalid_argument("MassFunction: masses must be non-negative");
    }
    if (std::abs(life + none + unknown - 1.0) > 1e-9) {
      throw std::invalid_argument("MassFunction: masses must sum to 1");
    }
  }
};

inline MassFunction probability_to_mass(double p, double reliability) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("probability_to_mass: probability out of [0, 1]");
  }
  if (!(reliability >= 0.0 && reliability <= 1.0)) {
    throw std::invalid_argument("probability_to_mass: reliability out of [0, 1]");
  }
  return {p * reliability, (1.0 - p) * reliability, 1.0 - reliability};
}

namespace detail {

inline MassFunction ds_combine_pair(const MassFunction& a, const MassFunction& b) {
  const double conflict = a.life * b.none + a.none * b.life;
  if (conflict >= 1.0 - 1e-12) {
    throw ConflictError("ds_combine: total conflict, combination undefined");
  }
  const double denom = 1.0 - conflict;
  MassFunction out;
  out.life = (a.life * b.life + a.life * b.unknown + a.unknown * b.life) / denom;
  out.none = (a.none * b.none + a.none * b.unknown + a.unknown * b.none) / denom;
  out.unknown = a.unknown * b.unknown / denom;
  return out;
}

}  // namespace detail

inline MassFunction ds_combine(const std::vector<MassFunction>& masses) {
  if (masses.size() < 2) throw std::invalid_argument("ds_combine: needs at least two masses");
  for (const auto& m : masses) m.validate();
  MassFunction acc = masses[0];
  for (std::size_t i = 1; i < masses.size(); ++i) {
    acc = detail::ds_combine_pair(acc, masses[i]);
  }
  return acc;
}

// Evidence-theory score for one window: each sensor's final raw probability
// becomes a mass at the given reliability, and the combined life mass is
// the score.
inline double ds_baseline_score(const FusionSample& sample, double reliability = 0.9) {
  if (sample.window() < 1) throw std::invalid_argument("ds_baseline_score: empty window");
  std::vector<MassFunction> masses;
  masses.reserve(3);
  for (const auto& branch : sample.branches) {
    masses.push_back(probability_to_mass(branch[0].back(), reliability));
  }
  return ds_combine(masses).life;
}

}  // namespace lifefuse::fusion
