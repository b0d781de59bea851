#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "lifefuse/neural/adam.hpp"
#include "lifefuse/neural/checkpoint.hpp"
#include "lifefuse/neural/grad_check.hpp"
#include "lifefuse/neural/layers.hpp"
#include "lifefuse/neural/losses.hpp"
#include "lifefuse/neural/ops.hpp"
#include "lifefuse/tensor.hpp"

namespace nn = lifefuse::nn;
using lifefuse::Tensor;
using nn::Mat;

namespace {

Tensor make_vector(std::initializer_list<double> vals) {
  Tensor t({vals.size()});
  std::size_t i = 0;
  for (double v : vals) t[i++] = v;
  return t;
}

double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

class TempFile {
 public:
  explicit TempFile(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace

TEST(Conv1dOp, IdentityKernelReproducesInput) {
  Tensor input({1, 5});
  for (std::size_t i = 0; i < 5; ++i) input.at(0, i) = 0.5 * static_cast<double>(i) - 1.0;
  Tensor kernel({1, 1, 1}, 1.0);
  Tensor bias({1}, 0.0);
  const Tensor out = nn::conv1d(input, kernel, bias);
  ASSERT_EQ(out.dim(0), 1u);
  ASSERT_EQ(out.dim(1), 5u);
  for (std::size_t i = 0; i < 5; ++i) ASSERT_DOUBLE_EQ(out.at(0, i), input.at(0, i));
}

TEST(Conv1dOp, MatchesHandComputedSlidingDotProduct) {
  Tensor input({1, 4});
  input.at(0, 0) = 1.0;
  input.at(0, 1) = 2.0;
  input.at(0, 2) = 3.0;
  input.at(0, 3) = 4.0;
  Tensor kernel({1, 1, 3});
  kernel.at(0, 0, 0) = 1.0;
  kernel.at(0, 0, 1) = 0.0;
  kernel.at(0, 0, 2) = -1.0;
  Tensor bias({1}, 0.0);
  const Tensor out = nn::conv1d(input, kernel, bias);
  ASSERT_EQ(out.dim(1), 2u);
  ASSERT_DOUBLE_EQ(out.at(0, 0), -2.0);
  ASSERT_DOUBLE_EQ(out.at(0, 1), -2.0);
}

TEST(Conv1dOp, ZeroKernelsLeaveOnlyBias) {
  Tensor input({2, 6}, 3.5);
  Tensor kernel({3, 2, 2}, 0.0);
  Tensor bias({3});
  bias.at(0) = -1.0;
  bias.at(1) = 0.25;
  bias.at(2) = 7.0;
  const Tensor out = nn::conv1d(input, kernel, bias);
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t t = 0; t < out.dim(1); ++t) ASSERT_DOUBLE_EQ(out.at(o, t), bias.at(o));
  }
}

TEST(Conv1dOp, RejectsInputShorterThanKernel) {
  Tensor input({1, 2}, 1.0);
  Tensor kernel({1, 1, 3}, 1.0);
  Tensor bias({1}, 0.0);
  ASSERT_THROW(nn::conv1d(input, kernel, bias), std::invalid_argument);
}

namespace {

nn::LstmCellWeights zero_weights(std::size_t input_size, std::size_t hidden) {
  return {Tensor({input_size, 4 * hidden}, 0.0), Tensor({hidden, 4 * hidden}, 0.0),
          Tensor({4 * hidden}, 0.0)};
}

nn::LstmCellWeights random_weights(std::size_t input_size, std::size_t hidden,
                                   std::mt19937_64& eng) {
  nn::LstmCellWeights w = zero_weights(input_size, hidden);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : w.w_ih.values) v = dist(eng);
  for (auto& v : w.w_hh.values) v = dist(eng);
  for (auto& v : w.bias.values) v = dist(eng);
  return w;
}

}  // namespace

TEST(LstmCell, ZeroWeightsAndStateStayAtZero) {
  auto w = zero_weights(3, 2);
  const Tensor x = make_vector({0.7, -2.0, 5.0});
  const auto [h, c] = nn::lstm_cell(x, Tensor({2}, 0.0), Tensor({2}, 0.0), w);
  for (std::size_t u = 0; u < 2; ++u) {
    ASSERT_DOUBLE_EQ(h.at(u), 0.0);
    ASSERT_DOUBLE_EQ(c.at(u), 0.0);
  }
}

TEST(LstmCell, LargeForgetBiasCarriesCellStateThrough) {
  auto w = zero_weights(2, 3);
  for (std::size_t u = 0; u < 3; ++u) w.bias.at(3 + u) = 10.0;  // forget-gate block
  Tensor c_prev({3});
  c_prev.at(0) = 1.0;
  c_prev.at(1) = -0.5;
  c_prev.at(2) = 0.25;
  const auto [h, c] = nn::lstm_cell(make_vector({0.3, 0.9}), Tensor({3}, 0.0), c_prev, w);
  for (std::size_t u = 0; u < 3; ++u) ASSERT_NEAR(c.at(u), c_prev.at(u), 1e-4);
}

TEST(LstmCell, HiddenStateStaysInsideUnitInterval) {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int round = 0; round < 50; ++round) {
    auto w = random_weights(4, 3, eng);
    Tensor x({4}), h0({3}), c0({3});
    for (auto& v : x.values) v = dist(eng);
    for (auto& v : h0.values) v = dist(eng) / 3.0;
    for (auto& v : c0.values) v = dist(eng);
    const auto [h, c] = nn::lstm_cell(x, h0, c0, w);
    for (std::size_t u = 0; u < 3; ++u) {
      ASSERT_GT(h.at(u), -1.0);
      ASSERT_LT(h.at(u), 1.0);
    }
  }
}

TEST(LstmCell, RejectsMismatchedShapes) {
  auto w = zero_weights(3, 2);
  ASSERT_THROW(nn::lstm_cell(make_vector({1.0, 2.0}), Tensor({2}, 0.0), Tensor({2}, 0.0), w),
               std::invalid_argument);
  ASSERT_THROW(
      nn::lstm_cell(make_vector({1.0, 2.0, 3.0}), Tensor({5}, 0.0), Tensor({2}, 0.0), w),
      std::invalid_argument);
}

TEST(LstmSequence, SingleStepMatchesCell) {
  std::mt19937_64 eng(7);
  auto w = random_weights(3, 4, eng);
  Tensor inputs({1, 3});
  inputs.at(0, 0) = 0.2;
  inputs.at(0, 1) = -1.1;
  inputs.at(0, 2) = 0.8;
  const Tensor seq = nn::lstm_sequence(inputs, w);
  const auto [h, c] =
      nn::lstm_cell(make_vector({0.2, -1.1, 0.8}), Tensor({4}, 0.0), Tensor({4}, 0.0), w);
  ASSERT_EQ(seq.dim(0), 1u);
  for (std::size_t u = 0; u < 4; ++u) ASSERT_DOUBLE_EQ(seq.at(0, u), h.at(u));
}

TEST(LstmSequence, ZeroWeightsGiveZeroOutputAtAnyDepth) {
  auto w = zero_weights(2, 3);
  Tensor inputs({5, 2}, 4.2);
  const Tensor seq = nn::lstm_sequence(inputs, w);
  for (std::size_t i = 0; i < seq.size(); ++i) ASSERT_DOUBLE_EQ(seq[i], 0.0);

  nn::LstmStack stack(2, 3, 3, "z");
  std::vector<nn::Param*> params;
  stack.collect(params);
  for (auto* p : params) p->value.setZero();
  std::vector<Mat> xs(5, Mat::Constant(2, 2, 4.2));
  for (const Mat& h : stack.forward(xs)) ASSERT_DOUBLE_EQ(h.cwiseAbs().maxCoeff(), 0.0);
}

TEST(LstmSequence, SpecBuiltStackIsSeedDeterministic) {
  nn::LayerSpec spec;
  spec.kind = nn::LayerKind::lstm;
  spec.input_size = 3;
  spec.hidden_size = 5;
  spec.num_layers = 3;
  Tensor inputs({6, 3});
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i] = std::sin(0.7 * static_cast<double>(i));
  }
  const Tensor a = nn::lstm_sequence(inputs, spec, 99);
  const Tensor b = nn::lstm_sequence(inputs, spec, 99);
  const Tensor c = nn::lstm_sequence(inputs, spec, 100);
  ASSERT_EQ(a.dim(0), 6u);
  ASSERT_EQ(a.dim(1), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_DOUBLE_EQ(a[i], b[i]);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - c[i]);
  ASSERT_GT(diff, 0.0);
}

TEST(Dropout, EvalModeIsIdentity) {
  Tensor x({4, 7});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) - 10.0;
  const Tensor out = nn::dropout(x, 0.3, nn::Mode::eval, 5);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_DOUBLE_EQ(out[i], x[i]);
}

TEST(Dropout, FullKeepProbabilityIsIdentityInBothModes) {
  Tensor x({3, 3}, 2.5);
  for (auto mode : {nn::Mode::train, nn::Mode::eval}) {
    const Tensor out = nn::dropout(x, 1.0, mode, 5);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_DOUBLE_EQ(out[i], x[i]);
  }
}

TEST(Dropout, SurvivorFractionTracksKeepProbability) {
  const std::size_t n = 1000000;
  Tensor x({n}, 1.0);
  const Tensor out = nn::dropout(x, 0.8, nn::Mode::train, 21);
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out[i] != 0.0) {
      ASSERT_DOUBLE_EQ(out[i], 1.0 / 0.8);
      ++survivors;
    }
  }
  const double fraction = static_cast<double>(survivors) / static_cast<double>(n);
  ASSERT_NEAR(fraction, 0.8, 0.01);
}

TEST(Dropout, SameSeedGivesSameMask) {
  Tensor x({100}, 1.0);
  const Tensor a = nn::dropout(x, 0.5, nn::Mode::train, 77);
  const Tensor b = nn::dropout(x, 0.5, nn::Mode::train, 77);
  const Tensor c = nn::dropout(x, 0.5, nn::Mode::train, 78);
  for (std::size_t i = 0; i < 100; ++i) ASSERT_DOUBLE_EQ(a[i], b[i]);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    if (a[i] != c[i]) ++differing;
  }
  ASSERT_GT(differing, 0u);
}

TEST(Dropout, RejectsKeepProbabilityOutsideUnitInterval) {
  Tensor x({4}, 1.0);
  ASSERT_THROW(nn::dropout(x, 0.0, nn::Mode::train, 1), std::invalid_argument);
  ASSERT_THROW(nn::dropout(x, 1.5, nn::Mode::train, 1), std::invalid_argument);
}

TEST(WeightedBce, PerfectPredictionScoresZero) {
  const auto hit1 = nn::weighted_bce(Tensor({1}, 1.0), Tensor({1}, 1.0), Tensor({1}, 1.0));
  ASSERT_NEAR(hit1.loss, 0.0, 1e-9);
  const auto hit0 = nn::weighted_bce(Tensor({1}, 0.0), Tensor({1}, 0.0), Tensor({1}, 1.0));
  ASSERT_NEAR(hit0.loss, 0.0, 1e-9);
}

TEST(WeightedBce, ChancePredictionScoresLogTwo) {
  const auto r = nn::weighted_bce(Tensor({1}, 0.5), Tensor({1}, 1.0), Tensor({1}, 1.0));
  ASSERT_NEAR(r.loss, std::log(2.0), 1e-9);
}

TEST(WeightedBce, WeightScalesHandComputedCase) {
  const auto r = nn::weighted_bce(Tensor({1}, 0.5), Tensor({1}, 0.0), Tensor({1}, 2.0));
  ASSERT_NEAR(r.loss, 2.0 * std::log(2.0), 1e-9);
}

TEST(WeightedBce, DoublingWeightsExactlyDoublesLoss) {
  std::mt19937_64 eng(31);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  std::bernoulli_distribution label(0.5);
  Eigen::MatrixXd pred(8, 1), target(8, 1), w1(8, 1);
  for (Eigen::Index i = 0; i < 8; ++i) {
    pred(i, 0) = p(eng);
    target(i, 0) = label(eng) ? 1.0 : 0.0;
    w1(i, 0) = p(eng) * 3.0;
  }
  const auto base = nn::weighted_bce(pred, target, w1);
  const auto doubled = nn::weighted_bce(pred, target, Eigen::MatrixXd(2.0 * w1));
  ASSERT_EQ(doubled.loss, 2.0 * base.loss);
}

TEST(WeightedBce, LossIsNonNegativeAndFiniteEverywhere) {
  std::mt19937_64 eng(32);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int round = 0; round < 200; ++round) {
    Eigen::MatrixXd pred(4, 1), target(4, 1), w(4, 1);
    for (Eigen::Index i = 0; i < 4; ++i) {
      pred(i, 0) = round % 3 == 0 ? (i % 2 == 0 ? 0.0 : 1.0) : p(eng);
      target(i, 0) = p(eng) < 0.5 ? 0.0 : 1.0;
      w(i, 0) = 2.0 * p(eng);
    }
    const auto r = nn::weighted_bce(pred, target, w);
    ASSERT_TRUE(std::isfinite(r.loss));
    ASSERT_GE(r.loss, 0.0);
  }
}

TEST(WeightedBce, RejectsNonBinaryTargets) {
  ASSERT_THROW(nn::weighted_bce(Tensor({1}, 0.5), Tensor({1}, 0.5), Tensor({1}, 1.0)),
               std::invalid_argument);
  ASSERT_THROW(nn::weighted_bce(Tensor({1}, 0.5), Tensor({1}, -1.0), Tensor({1}, 1.0)),
               std::invalid_argument);
}

TEST(WeightedBce, GradientMatchesCentralDifferences) {
  std::mt19937_64 eng(33);
  std::uniform_real_distribution<double> p(0.1, 0.9);
  Eigen::MatrixXd pred(6, 1), target(6, 1), w(6, 1);
  for (Eigen::Index i = 0; i < 6; ++i) {
    pred(i, 0) = p(eng);
    target(i, 0) = i % 2 == 0 ? 1.0 : 0.0;
    w(i, 0) = 0.5 + p(eng);
  }
  const auto analytic = nn::weighted_bce(pred, target, w);
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < 6; ++i) {
    Eigen::MatrixXd up = pred, down = pred;
    up(i, 0) += eps;
    down(i, 0) -= eps;
    const double fd =
        (nn::weighted_bce(up, target, w).loss - nn::weighted_bce(down, target, w).loss) /
        (2.0 * eps);
    ASSERT_NEAR(analytic.grad(i, 0), fd, 1e-6);
  }
}

TEST(WeightedBce, GradientIsZeroWhereClampEngages) {
  const auto r = nn::weighted_bce(Tensor({1}, 1e-9), Tensor({1}, 1.0), Tensor({1}, 1.0));
  ASSERT_TRUE(std::isfinite(r.loss));
  ASSERT_DOUBLE_EQ(r.grad[0], 0.0);
}

TEST(Mse, HandComputedCases) {
  const auto zero = nn::mse(Tensor({2}, 0.7), Tensor({2}, 0.7));
  ASSERT_DOUBLE_EQ(zero.loss, 0.0);

  const auto unit = nn::mse(Tensor({1}, 1.0), Tensor({1}, 0.0));
  ASSERT_DOUBLE_EQ(unit.loss, 1.0);

  Tensor pred({2}), target({2});
  pred[0] = 0.2;
  pred[1] = 0.8;
  target[0] = 0.0;
  target[1] = 1.0;
  const auto r = nn::mse(pred, target);
  ASSERT_NEAR(r.loss, 0.04, 1e-12);
  ASSERT_NEAR(r.grad[0], 0.2, 1e-12);
  ASSERT_NEAR(r.grad[1], -0.2, 1e-12);
}

TEST(Mse, RejectsShapeMismatch) {
  ASSERT_THROW(nn::mse(Tensor({2}, 0.0), Tensor({3}, 0.0)), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParametersUntouched) {
  Tensor params({3}, 1.5);
  Tensor grads({3}, 0.0);
  nn::AdamState state;
  nn::adam_step(params, grads, state);
  for (std::size_t i = 0; i < 3; ++i) ASSERT_DOUBLE_EQ(params[i], 1.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor params({1}, 0.0);
  Tensor grads({1}, 1.0);
  nn::AdamState state;
  nn::adam_step(params, grads, state);
  ASSERT_NEAR(params[0], -1e-3, 1e-6);
}

TEST(Adam, ConsecutiveIdenticalGradientsGiveSimilarSteps) {
  Tensor params({1}, 0.0);
  Tensor grads({1}, 1.0);
  nn::AdamState state;
  nn::adam_step(params, grads, state);
  const double first = std::abs(params[0]);
  const double before = params[0];
  nn::adam_step(params, grads, state);
  const double second = std::abs(params[0] - before);
  ASSERT_NEAR(second, first, 0.1 * first);
}

TEST(Adam, RejectsShapeMismatch) {
  Tensor params({2}, 0.0);
  Tensor grads({3}, 0.0);
  nn::AdamState state;
  ASSERT_THROW(nn::adam_step(params, grads, state), std::invalid_argument);
}

TEST(Adam, OptimizerMatchesFreeFunctionUpdate) {
  nn::Param p("p", "dense", 2, 2);
  p.value << 0.5, -0.25, 1.0, 2.0;
  p.grad << 0.1, -0.2, 0.3, -0.4;
  nn::AdamOptimizer opt({&p});
  opt.step();

  Tensor params({4}), grads({4});
  const double vals[4] = {0.5, -0.25, 1.0, 2.0};
  const double gs[4] = {0.1, -0.2, 0.3, -0.4};
  for (std::size_t i = 0; i < 4; ++i) {
    params[i] = vals[i];
    grads[i] = gs[i];
  }
  nn::AdamState state;
  nn::adam_step(params, grads, state);
  ASSERT_DOUBLE_EQ(p.value(0, 0), params[0]);
  ASSERT_DOUBLE_EQ(p.value(0, 1), params[1]);
  ASSERT_DOUBLE_EQ(p.value(1, 0), params[2]);
  ASSERT_DOUBLE_EQ(p.value(1, 1), params[3]);
}

TEST(GradCheck, DenseLayerOverRandomConfigurations) {
  std::mt19937_64 eng(41);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int round = 0; round < 20; ++round) {
    const auto r = nn::grad_check_dense(dim(eng), dim(eng), dim(eng), 1000 + round);
    ASSERT_LT(r.max_rel_error, 1e-4) << "worst parameter: " << r.worst_param;
  }
}

TEST(GradCheck, Conv1dOverRandomConfigurations) {
  std::mt19937_64 eng(42);
  std::uniform_int_distribution<int> ch(1, 4);
  std::uniform_int_distribution<int> ker(1, 4);
  std::uniform_int_distribution<int> extra(0, 5);
  for (int round = 0; round < 20; ++round) {
    const int k = ker(eng);
    const auto r =
        nn::grad_check_conv1d(ch(eng), ch(eng), k, k + extra(eng), 1 + round % 3, 2000 + round);
    ASSERT_LT(r.max_rel_error, 1e-4) << "worst parameter: " << r.worst_param;
  }
}

TEST(GradCheck, LstmStackOverRandomConfigurations) {
  std::mt19937_64 eng(43);
  std::uniform_int_distribution<int> dim(1, 5);
  std::uniform_int_distribution<int> depth(1, 3);
  std::uniform_int_distribution<int> steps(1, 5);
  for (int round = 0; round < 20; ++round) {
    const auto r = nn::grad_check_lstm(dim(eng), dim(eng), depth(eng), steps(eng), 1 + round % 3,
                                       3000 + round);
    ASSERT_LT(r.max_rel_error, 1e-4) << "worst parameter: " << r.worst_param;
  }
}

TEST(GradCheck, LstmSequenceFourStepsThreeHidden) {
  const auto r = nn::grad_check_lstm(3, 3, 1, 4, 2, 4321);
  ASSERT_LT(r.max_rel_error, 1e-4) << "worst parameter: " << r.worst_param;
}

TEST(GradCheck, DropoutOverRandomConfigurations) {
  std::mt19937_64 eng(44);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> keep(0.3, 1.0);
  for (int round = 0; round < 20; ++round) {
    const auto r = nn::grad_check_dropout(dim(eng), dim(eng), keep(eng), 4000 + round);
    ASSERT_LT(r.max_rel_error, 1e-4) << "worst parameter: " << r.worst_param;
  }
}

TEST(GradCheck, ActivationsOverRandomConfigurations) {
  std::mt19937_64 eng(45);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int round = 0; round < 20; ++round) {
    const int rows = dim(eng), cols = dim(eng);
    const auto relu = nn::grad_check_activation<nn::ReluLayer>(rows, cols, 5000 + round);
    ASSERT_LT(relu.max_rel_error, 1e-4);
    const auto sig = nn::grad_check_activation<nn::SigmoidLayer>(rows, cols, 6000 + round);
    ASSERT_LT(sig.max_rel_error, 1e-4);
    const auto tanh_r = nn::grad_check_activation<nn::TanhLayer>(rows, cols, 7000 + round);
    ASSERT_LT(tanh_r.max_rel_error, 1e-4);
  }
}

TEST(GradCheck, LayerSpecDispatchCoversEveryKind) {
  for (auto kind : {nn::LayerKind::dense, nn::LayerKind::conv1d, nn::LayerKind::lstm,
                    nn::LayerKind::dropout, nn::LayerKind::relu, nn::LayerKind::sigmoid,
                    nn::LayerKind::tanh}) {
    nn::LayerSpec spec;
    spec.kind = kind;
    const auto r = nn::grad_check(spec, 90 + static_cast<int>(kind));
    ASSERT_LT(r.max_rel_error, 1e-4) << "worst parameter: " << r.worst_param;
  }
}

TEST(GradCheck, ConvSigmoidCrossEntropyComposite) {
  std::mt19937_64 outer(46);
  std::uniform_int_distribution<int> ch(1, 3);
  std::uniform_int_distribution<int> ker(1, 3);
  std::uniform_int_distribution<int> extra(0, 4);
  std::uniform_int_distribution<int> batch_d(2, 4);
  std::bernoulli_distribution label(0.5);
  std::uniform_real_distribution<double> wdist(0.5, 2.0);

  for (int round = 0; round < 20; ++round) {
    const Eigen::Index cin = ch(outer), cout = ch(outer), k = ker(outer);
    const Eigen::Index len = k + extra(outer), batch = batch_d(outer);
    std::mt19937_64 eng(8000 + round);
    nn::Conv1dLayer conv(cin, cout, k, "conv");
    conv.init(eng);

    std::vector<nn::Param> inputs;
    for (Eigen::Index b = 0; b < batch; ++b) {
      inputs.emplace_back("input.s" + std::to_string(b), "input", cin, len);
      nn::uniform_init(inputs.back().value, 1.0, eng);
    }
    Eigen::MatrixXd target(batch, 1), weight(batch, 1);
    for (Eigen::Index b = 0; b < batch; ++b) {
      target(b, 0) = label(outer) ? 1.0 : 0.0;
      weight(b, 0) = wdist(outer);
    }

    auto gather = [&] {
      std::vector<Mat> xs;
      for (const auto& p : inputs) xs.push_back(p.value);
      return xs;
    };
    auto run_loss = [&] {
      const auto ys = conv.forward(gather());
      Eigen::MatrixXd pred(batch, 1);
      for (Eigen::Index b = 0; b < batch; ++b) pred(b, 0) = sigmoid_scalar(ys[b].sum());
      return nn::weighted_bce(pred, target, weight).loss;
    };

    const auto ys = conv.forward(gather());
    Eigen::MatrixXd pred(batch, 1);
    for (Eigen::Index b = 0; b < batch; ++b) pred(b, 0) = sigmoid_scalar(ys[b].sum());
    const auto loss = nn::weighted_bce(pred, target, weight);
    std::vector<Mat> gys(static_cast<std::size_t>(batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double dsum = loss.grad(b, 0) * pred(b, 0) * (1.0 - pred(b, 0));
      gys[static_cast<std::size_t>(b)] = Mat::Constant(cout, len - k + 1, dsum);
    }
    const auto gxs = conv.backward(gys);
    for (std::size_t b = 0; b < inputs.size(); ++b) inputs[b].grad = gxs[b];

    std::vector<nn::Param*> params;
    conv.collect(params);
    for (auto& p : inputs) params.push_back(&p);
    const auto r = nn::check_gradients(params, run_loss, 1e-5);
    ASSERT_LT(r.max_rel_error, 1e-4) << "worst parameter: " << r.worst_param;
  }
}

TEST(GradCheck, RejectsStepSizeOutsideSupportedRange) {
  ASSERT_THROW(nn::grad_check_dense(2, 2, 2, 1, 1e-8), std::invalid_argument);
  ASSERT_THROW(nn::grad_check_dense(2, 2, 2, 1, 1e-2), std::invalid_argument);
}

TEST(SequenceLayout, ConvToSequenceRoundTrips) {
  std::mt19937_64 eng(48);
  std::vector<Mat> conv_out;
  for (int b = 0; b < 3; ++b) conv_out.push_back(nn::detail::random_mat(4, 6, eng));
  const auto seq = nn::sequence_from_conv(conv_out);
  ASSERT_EQ(seq.size(), 6u);
  ASSERT_EQ(seq[0].rows(), 3);
  ASSERT_EQ(seq[0].cols(), 4);
  const auto back = nn::conv_grad_from_sequence(seq, 3);
  for (int b = 0; b < 3; ++b) ASSERT_EQ((back[b] - conv_out[b]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Checkpoint, RoundTripRestoresAllParameters) {
  std::mt19937_64 eng(51);
  nn::DenseLayer dense(4, 3, "head");
  nn::Conv1dLayer conv(2, 3, 3, "stem");
  nn::LstmStack lstm(3, 4, 2, "core");
  dense.init(eng);
  conv.init(eng);
  lstm.init(eng);

  std::vector<nn::Param*> params;
  conv.collect(params);
  lstm.collect(params);
  dense.collect(params);

  std::vector<Mat> saved;
  for (const auto* p : params) saved.push_back(p->value);

  TempFile file("lifefuse_checkpoint_test.ckpt");
  nn::save_checkpoint(params, file.path());
  for (auto* p : params) p->value.setConstant(-99.0);
  nn::load_checkpoint(params, file.path());

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double err = (params[i]->value - saved[i]).cwiseAbs().maxCoeff();
    ASSERT_LT(err, 1e-6) << params[i]->name;
  }
}

TEST(Checkpoint, RejectsMismatchedArchitecture) {
  std::mt19937_64 eng(52);
  nn::DenseLayer dense(4, 3, "head");
  dense.init(eng);
  std::vector<nn::Param*> params;
  dense.collect(params);

  TempFile file("lifefuse_checkpoint_mismatch.ckpt");
  nn::save_checkpoint(params, file.path());

  nn::DenseLayer other(4, 5, "head");
  std::vector<nn::Param*> other_params;
  other.collect(other_params);
  ASSERT_THROW(nn::load_checkpoint(other_params, file.path()), std::invalid_argument);

  nn::DenseLayer renamed(4, 3, "torso");
  std::vector<nn::Param*> renamed_params;
  renamed.collect(renamed_params);
  ASSERT_THROW(nn::load_checkpoint(renamed_params, file.path()), std::invalid_argument);

  nn::LstmStack deeper(4, 3, 2, "head");
  std::vector<nn::Param*> deeper_params;
  deeper.collect(deeper_params);
  ASSERT_THROW(nn::load_checkpoint(deeper_params, file.path()), std::invalid_argument);
}

TEST(Checkpoint, RejectsCorruptedFiles) {
  std::mt19937_64 eng(53);
  nn::DenseLayer dense(2, 2, "head");
  dense.init(eng);
  std::vector<nn::Param*> params;
  dense.collect(params);

  TempFile garbled("lifefuse_checkpoint_garbled.ckpt");
  {
    std::ofstream out(garbled.path(), std::ios::binary);
    out << "not json at all\n";
  }
  ASSERT_THROW(nn::load_checkpoint(params, garbled.path()), lifefuse::ParseError);

  TempFile truncated("lifefuse_checkpoint_truncated.ckpt");
  nn::save_checkpoint(params, truncated.path());
  const auto full = std::filesystem::file_size(truncated.path());
  std::filesystem::resize_file(truncated.path(), full - 6);
  ASSERT_THROW(nn::load_checkpoint(params, truncated.path()), lifefuse::ParseError);
}

TEST(Initialization, SameSeedGivesIdenticalWeights) {
  std::mt19937_64 e1(9), e2(9);
  nn::LstmStack a(3, 4, 2, "net"), b(3, 4, 2, "net");
  a.init(e1);
  b.init(e2);
  std::vector<nn::Param*> pa, pb;
  a.collect(pa);
  b.collect(pb);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ((pa[i]->value - pb[i]->value).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Initialization, ForgetGateBiasStartsAtOne) {
  std::mt19937_64 eng(10);
  nn::LstmLayer layer(3, 4, "net");
  layer.init(eng);
  std::vector<nn::Param*> params;
  layer.collect(params);
  const nn::Param* bias = params[2];
  ASSERT_EQ(bias->name, "net.b");
  for (Eigen::Index u = 0; u < 4; ++u) {
    ASSERT_DOUBLE_EQ(bias->value(0, 4 + u), 1.0);   // forget block
    ASSERT_DOUBLE_EQ(bias->value(0, u), 0.0);       // input block
    ASSERT_DOUBLE_EQ(bias->value(0, 8 + u), 0.0);   // candidate block
    ASSERT_DOUBLE_EQ(bias->value(0, 12 + u), 0.0);  // output block
  }
}
