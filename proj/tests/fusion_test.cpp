#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lifefuse/dsp.hpp"
#include "lifefuse/errors.hpp"
#include "lifefuse/fusion.hpp"

namespace fu = lifefuse::fusion;
using fu::FusionConfig;
using fu::FusionNetwork;
using fu::MassFunction;
using lifefuse::dsp::FusionSample;
using lifefuse::nn::Mat;
using lifefuse::nn::Mode;

namespace {

// Small-but-real shape used where a test only needs a working network.
FusionConfig tiny_config() {
  FusionConfig cfg = FusionConfig::defaults(8);
  cfg.conv_channels = 4;
  cfg.branch_lstm_layers = 2;
  cfg.branch_hidden = 6;
  cfg.fusion_hidden_1 = 8;
  cfg.fusion_hidden_2 = 6;
  cfg.dense_widths = {5, 3};
  return cfg;
}

FusionSample random_sample(std::mt19937_64& eng, std::size_t window, int label) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FusionSample sample;
  for (auto& branch : sample.branches) {
    for (auto& channel : branch) {
      channel.resize(window);
      for (double& v : channel) v = unit(eng);
    }
  }
  sample.label = label;
  sample.weight = 1.0;
  return sample;
}

std::vector<FusionSample> random_samples(std::uint64_t seed, std::size_t count,
                                         std::size_t window) {
  std::mt19937_64 eng(seed);
  std::vector<FusionSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(random_sample(eng, window, static_cast<int>(i % 2)));
  }
  return out;
}

void expect_invalid(const FusionConfig& cfg, const std::string& needle) {
  try {
    cfg.validate();
    FAIL() << "expected validation to reject a config (wanted message with '" << needle << "')";
  } catch (const std::invalid_argument& e) {
    ASSERT_NE(std::string(e.what()).find(needle), std::string::npos)
        << "actual message: " << e.what();
  }
}

MassFunction random_mass(std::mt19937_64& eng) {
  std::uniform_real_distribution<double> unit(1e-3, 1.0);
  const double a = unit(eng), b = unit(eng), c = unit(eng);
  const double sum = a + b + c;
  return {a / sum, b / sum, c / sum};
}

void expect_mass_near(const MassFunction& got, const MassFunction& want, double tol) {
  EXPECT_NEAR(got.life, want.life, tol);
  EXPECT_NEAR(got.none, want.none, tol);
  EXPECT_NEAR(got.unknown, want.unknown, tol);
}

}  // namespace

TEST(FusionConfig, DefaultsDeriveStageWidthsFromWindow) {
  const FusionConfig cfg = FusionConfig::defaults(64);
  EXPECT_EQ(cfg.window, 64u);
  EXPECT_EQ(cfg.branch_hidden, 64u);
  EXPECT_EQ(cfg.fusion_hidden_1, 192u);
  EXPECT_EQ(cfg.fusion_hidden_2, 128u);
  EXPECT_EQ(cfg.dense_widths, (std::vector<std::size_t>{128, 64, 32}));
  EXPECT_EQ(cfg.smooth_width, 5u);
  EXPECT_EQ(cfg.conv_channels, 8u);
  EXPECT_EQ(cfg.kernel, 3u);
  EXPECT_EQ(cfg.branch_lstm_layers, 3u);
  EXPECT_EQ(cfg.epochs, 20u);
  EXPECT_EQ(cfg.batch, 16u);
  EXPECT_DOUBLE_EQ(cfg.keep_prob, 0.8);
  EXPECT_TRUE(cfg.loss == fu::LossKind::bce);
  EXPECT_NO_THROW(cfg.validate());

  const FusionConfig standard = FusionConfig::standard();
  EXPECT_EQ(standard.window, 64u);
  EXPECT_EQ(standard.dense_widths, cfg.dense_widths);

  const FusionConfig experiment = FusionConfig::experiment();
  EXPECT_EQ(experiment.window, 32u);
  EXPECT_TRUE(experiment.loss == fu::LossKind::mse);
  EXPECT_EQ(experiment.dense_widths, (std::vector<std::size_t>{64, 32, 16}));
  EXPECT_NO_THROW(experiment.validate());
}

TEST(FusionConfig, ValidationNamesTheOffendingKnob) {
  FusionConfig cfg = FusionConfig::defaults(16);

  cfg.window = 4;
  expect_invalid(cfg, "window 4 out of [8, 1024]");

  cfg = FusionConfig::defaults(16);
  cfg.kernel = 4;
  expect_invalid(cfg, "kernel 4 must be odd");

  cfg = FusionConfig::defaults(16);
  cfg.window = 8;
  cfg.kernel = 9;
  expect_invalid(cfg, "window shorter than convolution kernel");

  cfg = FusionConfig::defaults(16);
  cfg.dense_widths = {32, 32};
  expect_invalid(cfg, "dense stage 1 width 32 does not decrease from 32");

  cfg = FusionConfig::defaults(16);
  cfg.dense_widths = {};
  expect_invalid(cfg, "dense stage needs at least one width");

  cfg = FusionConfig::defaults(16);
  cfg.keep_prob = 0.0;
  expect_invalid(cfg, "keep_prob");

  cfg = FusionConfig::defaults(16);
  cfg.smooth_width = 4;
  expect_invalid(cfg, "smooth_width must be odd");

  cfg = FusionConfig::defaults(16);
  cfg.sensor_weights[2] = 1.5;
  expect_invalid(cfg, "sensor weight 2 out of [0, 1]");

  cfg = FusionConfig::defaults(16);
  cfg.learning_rate = 0.0;
  expect_invalid(cfg, "learning_rate");

  cfg = FusionConfig::defaults(16);
  cfg.branch_lstm_layers = 0;
  expect_invalid(cfg, "branch LSTM stage needs >= 1 layer");
}

TEST(FusionNetwork, SameSeedBuildsBitIdenticalParameters) {
  FusionConfig cfg = tiny_config();
  cfg.seed = 99;
  FusionNetwork a(cfg);
  FusionNetwork b(cfg);
  auto pa = a.params();
  auto pb = b.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i]->name, pb[i]->name);
    ASSERT_TRUE(pa[i]->value == pb[i]->value) << "parameter " << pa[i]->name << " differs";
  }

  cfg.seed = 100;
  FusionNetwork c(cfg);
  auto pc = c.params();
  bool any_differ = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!(pa[i]->value == pc[i]->value)) any_differ = true;
  }
  EXPECT_TRUE(any_differ);
}

TEST(FusionNetwork, ParameterCountMatchesHandArithmetic) {
  // defaults(8): three branches of conv(2->8,k3) + LSTM 8->8 x3, fusion
  // LSTMs 24->24 and 24->16, dense 16/8/4 chain, scalar head.
  FusionNetwork net(FusionConfig::defaults(8));
  EXPECT_EQ(net.parameter_count(), 12841u);
}

TEST(FusionNetwork, EvalForwardIsDeterministicAndInUnitInterval) {
  FusionConfig cfg = tiny_config();
  cfg.seed = 5;
  FusionNetwork net(cfg);
  auto samples = random_samples(21, 6, cfg.window);

  const Mat out1 = net.forward(samples, Mode::eval);
  const Mat out2 = net.forward(samples, Mode::eval);
  ASSERT_EQ(out1.rows(), 6);
  ASSERT_EQ(out1.cols(), 1);
  ASSERT_TRUE(out1 == out2);
  for (Eigen::Index r = 0; r < out1.rows(); ++r) {
    EXPECT_GT(out1(r, 0), 0.0);
    EXPECT_LT(out1(r, 0), 1.0);
  }
}

TEST(FusionNetwork, EvalOutputIndependentOfBatchCompanions) {
  FusionConfig cfg = tiny_config();
  cfg.seed = 6;
  FusionNetwork net(cfg);
  auto samples = random_samples(22, 4, cfg.window);

  const Mat batched = net.forward(samples, Mode::eval);
  std::vector<FusionSample> reversed(samples.rbegin(), samples.rend());
  const Mat flipped = net.forward(reversed, Mode::eval);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto fr = static_cast<Eigen::Index>(samples.size() - 1 - i);
    ASSERT_EQ(batched(r, 0), flipped(fr, 0));
    ASSERT_EQ(batched(r, 0), net.forward_one(samples[i]));
  }
}

TEST(FusionNetwork, ZeroWeightBranchMasksItsInputExactly) {
  FusionConfig cfg = tiny_config();
  cfg.seed = 7;
  cfg.sensor_weights = {0.0, 1.0, 1.0};
  FusionNetwork net(cfg);

  auto samples = random_samples(23, 3, cfg.window);
  auto mutated = samples;
  std::mt19937_64 eng(24);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& sample : mutated) {
    for (auto& channel : sample.branches[0]) {
      for (double& v : channel) v = unit(eng);
    }
  }

  const Mat base = net.forward(samples, Mode::eval);
  const Mat moved = net.forward(mutated, Mode::eval);
  ASSERT_TRUE(base == moved);

  // The same perturbation must show once the branch carries weight again.
  FusionConfig live = cfg;
  live.sensor_weights = {1.0, 1.0, 1.0};
  FusionNetwork live_net(live);
  const Mat live_base = live_net.forward(samples, Mode::eval);
  const Mat live_moved = live_net.forward(mutated, Mode::eval);
  EXPECT_FALSE(live_base == live_moved);
}

TEST(FusionNetwork, RejectsWindowMismatchAndEmptyBatch) {
  FusionConfig cfg = tiny_config();
  FusionNetwork net(cfg);
  auto samples = random_samples(25, 1, cfg.window + 1);
  EXPECT_THROW(net.forward(samples, Mode::eval), std::invalid_argument);
  EXPECT_THROW(net.forward(std::vector<FusionSample>{}, Mode::eval), std::invalid_argument);
}

TEST(FusionGradCheck, AssembledNetworkMatchesFiniteDifferences) {
  FusionConfig cfg = tiny_config();
  cfg.seed = 11;
  for (double keep : {1.0, 0.8}) {
    cfg.keep_prob = keep;
    const auto result = fu::fusion_grad_check(cfg, 2, 31);
    EXPECT_LT(result.max_rel_error, 1e-4)
        << "keep_prob " << keep << " worst parameter " << result.worst_param;
  }
}

TEST(FusionTraining, FitsDegenerateAllPositiveSet) {
  FusionConfig cfg = FusionConfig::defaults(8);
  cfg.epochs = 5;
  cfg.batch = 8;
  cfg.learning_rate = 3e-2;
  cfg.seed = 3;

  std::mt19937_64 eng(17);
  std::vector<FusionSample> samples;
  for (std::size_t i = 0; i < 80; ++i) samples.push_back(random_sample(eng, cfg.window, 1));

  FusionNetwork net(cfg);
  const auto res = fu::train(net, samples);
  ASSERT_EQ(res.history.size(), 6u);
  EXPECT_EQ(res.history.front().epoch, 0u);
  EXPECT_EQ(res.history.back().epoch, 5u);
  // Untrained sigmoid output hovers at chance, so the pre-training record
  // sits near -ln(0.5).
  EXPECT_NEAR(res.history.front().train_loss, std::log(2.0), 0.08);
  EXPECT_LT(res.history.back().train_loss, 0.05);
}

TEST(FusionTraining, RepeatedRunsAreBitIdentical) {
  FusionConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.batch = 8;
  cfg.seed = 12;
  auto samples = random_samples(26, 48, cfg.window);

  std::vector<double> first;
  for (int run = 0; run < 2; ++run) {
    FusionNetwork net(cfg);
    const auto res = fu::train(net, samples);
    ASSERT_EQ(res.history.size(), 3u);
    std::vector<double> flat;
    for (const auto& rec : res.history) {
      flat.push_back(rec.train_loss);
      flat.push_back(rec.test_loss);
    }
    if (run == 0) {
      first = flat;
    } else {
      ASSERT_EQ(first, flat);
    }
  }
}

TEST(FusionTraining, RejectsSampleSetsSmallerThanTwoBatches) {
  FusionConfig cfg = tiny_config();
  cfg.batch = 8;
  FusionNetwork net(cfg);
  auto samples = random_samples(27, 15, cfg.window);
  try {
    fu::train(net, samples);
    FAIL() << "expected training on 15 samples with batch 8 to throw";
  } catch (const std::invalid_argument& e) {
    ASSERT_NE(std::string(e.what()).find("at least 16"), std::string::npos);
  }
}

TEST(ChronologicalSplit, ThousandStepStreamSplitsEightyTwenty) {
  // 1000 stream steps windowed at G=64 give 936 samples; the 80% cut at
  // step 800 keeps windows ending by 800 for training, starting at 800
  // for test, and drops the 63 straddlers.
  const auto split = fu::chronological_split(936, 64);
  EXPECT_EQ(split.train.size(), 737u);
  EXPECT_EQ(split.test.size(), 136u);
  EXPECT_EQ(split.train.front(), 0u);
  EXPECT_EQ(split.train.back(), 736u);
  EXPECT_EQ(split.test.front(), 800u);
  EXPECT_EQ(split.test.back(), 935u);
  for (std::size_t k : split.train) EXPECT_LE(k + 64, 800u);
  for (std::size_t k : split.test) EXPECT_GE(k, 800u);
}

TEST(ChronologicalSplit, HandSizedCaseDropsStraddlers) {
  const auto split = fu::chronological_split(10, 2, 0.5);
  EXPECT_EQ(split.train, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(split.test, (std::vector<std::size_t>{6, 7, 8, 9}));
}

TEST(ChronologicalSplit, RejectsDegenerateArguments) {
  EXPECT_THROW(fu::chronological_split(0, 8), std::invalid_argument);
  EXPECT_THROW(fu::chronological_split(10, 8, 0.0), std::invalid_argument);
  EXPECT_THROW(fu::chronological_split(10, 8, 1.0), std::invalid_argument);
}

TEST(RocAuc, HandCases) {
  EXPECT_DOUBLE_EQ(fu::roc_auc({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(fu::roc_auc({0.2, 0.8}, {1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(fu::roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
  // One discordant pair out of four: 0.4 (negative) outranks 0.35.
  EXPECT_DOUBLE_EQ(fu::roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
  // Rank statistic with half credit: the positive tied at 0.5 contributes 0.5.
  EXPECT_DOUBLE_EQ(fu::roc_auc({0.5, 0.5, 0.9}, {0, 1, 1}), 0.75);
}

TEST(RocAuc, IndependentScoresScoreNearHalf) {
  std::mt19937_64 eng(404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> scores(10000);
  std::vector<int> labels(10000);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = unit(eng);
    labels[i] = coin(eng) ? 1 : 0;
  }
  EXPECT_NEAR(fu::roc_auc(scores, labels), 0.5, 0.03);
}

TEST(RocAuc, RejectsDegenerateInput) {
  EXPECT_THROW(fu::roc_auc({}, {}), std::invalid_argument);
  EXPECT_THROW(fu::roc_auc({0.5, 0.6}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(fu::roc_auc({0.5, 0.6}, {0, 0}), std::invalid_argument);
  EXPECT_THROW(fu::roc_auc({0.5, 0.6}, {0, 2}), std::invalid_argument);
}

TEST(FusionEvaluate, ThresholdTieFallsToNoLife) {
  FusionConfig cfg = tiny_config();
  cfg.seed = 14;
  FusionNetwork net(cfg);
  auto samples = random_samples(28, 6, cfg.window);

  const auto baseline = fu::evaluate(net, samples);
  ASSERT_EQ(baseline.predicted.size(), samples.size());
  EXPECT_DOUBLE_EQ(baseline.metrics.roc_auc, fu::roc_auc(baseline.predicted, baseline.truth));

  // A threshold equal to the largest probability classifies every sample
  // as no-life: the comparison is strict, so the borderline score loses.
  const double top = *std::max_element(baseline.predicted.begin(), baseline.predicted.end());
  const auto all_negative = fu::evaluate(net, samples, top);
  EXPECT_DOUBLE_EQ(all_negative.metrics.recall, 0.0);
  EXPECT_DOUBLE_EQ(all_negative.metrics.precision, 0.0);
  EXPECT_DOUBLE_EQ(all_negative.metrics.accuracy, 0.5);

  const auto all_positive = fu::evaluate(net, samples, -1.0);
  EXPECT_DOUBLE_EQ(all_positive.metrics.recall, 1.0);
  EXPECT_DOUBLE_EQ(all_positive.metrics.precision, 0.5);
  EXPECT_DOUBLE_EQ(all_positive.metrics.accuracy, 0.5);
}

TEST(MassFunctionSuite, ProbabilityToMassHandCases) {
  expect_mass_near(fu::probability_to_mass(0.6, 0.9), {0.54, 0.36, 0.10}, 1e-12);
  expect_mass_near(fu::probability_to_mass(0.3, 0.0), {0.0, 0.0, 1.0}, 0.0);
  expect_mass_near(fu::probability_to_mass(1.0, 1.0), {1.0, 0.0, 0.0}, 0.0);
  EXPECT_THROW(fu::probability_to_mass(-0.1, 0.5), std::invalid_argument);
  EXPECT_THROW(fu::probability_to_mass(0.5, 1.2), std::invalid_argument);
}

TEST(MassFunctionSuite, ValidateRejectsBrokenMasses) {
  EXPECT_NO_THROW((MassFunction{0.2, 0.3, 0.5}).validate());
  EXPECT_THROW((MassFunction{-0.1, 0.6, 0.5}).validate(), std::invalid_argument);
  EXPECT_THROW((MassFunction{0.5, 0.4, 0.2}).validate(), std::invalid_argument);
}

TEST(DempsterCombination, ReproducesHandComputedCase) {
  const MassFunction a{0.6, 0.3, 0.1};
  const MassFunction b{0.7, 0.2, 0.1};
  const MassFunction combined = fu::ds_combine({a, b});
  // Conflict K = 0.6*0.2 + 0.3*0.7 = 0.33; survivors renormalize by 0.67.
  expect_mass_near(combined, {0.55 / 0.67, 0.11 / 0.67, 0.01 / 0.67}, 1e-12);
  expect_mass_near(combined, {0.8209, 0.1642, 0.0149}, 1e-4);
  EXPECT_NO_THROW(combined.validate());
}

TEST(DempsterCombination, VacuousMassIsIdentity) {
  const MassFunction m{0.45, 0.35, 0.20};
  const MassFunction vacuous{0.0, 0.0, 1.0};
  expect_mass_near(fu::ds_combine({m, vacuous}), m, 1e-15);
  expect_mass_near(fu::ds_combine({vacuous, m}), m, 1e-15);
}

TEST(DempsterCombination, TotalConflictThrows) {
  EXPECT_THROW(fu::ds_combine({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}), lifefuse::ConflictError);
}

TEST(DempsterCombination, RejectsShortOrInvalidLists) {
  EXPECT_THROW(fu::ds_combine({}), std::invalid_argument);
  EXPECT_THROW(fu::ds_combine({{0.5, 0.4, 0.1}}), std::invalid_argument);
  EXPECT_THROW(fu::ds_combine({{0.5, 0.4, 0.1}, {0.5, 0.4, 0.2}}), std::invalid_argument);
}

TEST(DempsterCombination, OrderInvariantOverRandomTriples) {
  std::mt19937_64 eng(777);
  for (int trial = 0; trial < 1000; ++trial) {
    const MassFunction a = random_mass(eng);
    const MassFunction b = random_mass(eng);
    const MassFunction c = random_mass(eng);

    const MassFunction ab = fu::ds_combine({a, b});
    const MassFunction ba = fu::ds_combine({b, a});
    expect_mass_near(ab, ba, 1e-9);

    const MassFunction abc = fu::ds_combine({a, b, c});
    const MassFunction cba = fu::ds_combine({c, b, a});
    const MassFunction bca = fu::ds_combine({b, c, a});
    expect_mass_near(abc, cba, 1e-9);
    expect_mass_near(abc, bca, 1e-9);

    EXPECT_NO_THROW(abc.validate());
  }
}

TEST(DempsterBaseline, ScoresFinalWindowProbabilities) {
  std::mt19937_64 eng(29);
  FusionSample sample = random_sample(eng, 8, 1);
  sample.branches[0][0].back() = 0.9;
  sample.branches[1][0].back() = 0.8;
  sample.branches[2][0].back() = 0.3;

  const double expected = fu::ds_combine({fu::probability_to_mass(0.9, 0.9),
                                          fu::probability_to_mass(0.8, 0.9),
                                          fu::probability_to_mass(0.3, 0.9)})
                              .life;
  EXPECT_DOUBLE_EQ(fu::ds_baseline_score(sample), expected);

  // Only the last raw value of each branch feeds the score.
  FusionSample perturbed = sample;
  perturbed.branches[0][0][0] = 0.123;
  perturbed.branches[1][1].assign(8, 0.5);
  EXPECT_DOUBLE_EQ(fu::ds_baseline_score(perturbed), expected);

  FusionSample empty;
  for (auto& branch : empty.branches) {
    branch[0].clear();
    branch[1].clear();
  }
  EXPECT_THROW(fu::ds_baseline_score(empty), std::invalid_argument);
}
