#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lifefuse/config.hpp"
#include "lifefuse/detectors.hpp"
#include "lifefuse/dsp.hpp"
#include "lifefuse/errors.hpp"
#include "lifefuse/fusion.hpp"
#include "lifefuse/io.hpp"
#include "lifefuse/neural/checkpoint.hpp"
#include "lifefuse/rng.hpp"
#include "lifefuse/sha256.hpp"
#include "lifefuse/signal_sim.hpp"
#include "lifefuse/svg.hpp"

namespace fs = std::filesystem;
namespace cli = lifefuse::cli;
namespace det = lifefuse::det;
namespace fu = lifefuse::fusion;
namespace io = lifefuse::io;
namespace sim = lifefuse::sim;
namespace svg = lifefuse::svg;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string preset = "standard";
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--preset", opts.preset,
                  "configuration starting point: standard, experiment, or interference")
      ->capture_default_str();
  cmd->add_option("-c,--config", opts.config_path,
                  "JSON config file; its keys overlay the preset");
  cmd->add_option("-s,--set", opts.overrides,
                  "dotted.path=value override applied after the config file; repeatable");
  cmd->add_option("-o,--out", opts.out_dir, "output directory (overrides paths.out_dir)");
}

struct ResolvedRun {
  cli::RunConfig cfg;
  std::string config_sha256;
};

ResolvedRun resolve_config(const CommonOpts& opts) {
  json j = cli::to_json(cli::preset(opts.preset));
  if (!opts.config_path.empty()) {
    cli::merge_json(j, cli::load_config_file(opts.config_path));
  }
  for (const std::string& assignment : opts.overrides) {
    cli::apply_override(j, assignment);
  }
  if (const char* env_seed = std::getenv("LIFEFUSE_SEED")) {
    std::uint64_t seed = 0;
    const std::string_view text = env_seed;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw std::invalid_argument("LIFEFUSE_SEED must be an unsigned integer, got '" +
                                  std::string(text) + "'");
    }
    j["scenario"]["seed"] = seed;
    j["fusion"]["seed"] = seed;
    j["detector"]["seed"] = seed;
  }
  if (!opts.out_dir.empty()) j["paths"]["out_dir"] = opts.out_dir;

  ResolvedRun run;
  run.cfg = cli::run_config_from_json(j);
  // Hash the canonical round-tripped form so key order and formatting in
  // the source file cannot change the recorded identity.
  run.config_sha256 = lifefuse::hash::sha256_hex(cli::to_json(run.cfg).dump());
  return run;
}

fs::path ensure_out_dir(const cli::RunConfig& cfg) {
  const fs::path dir(cfg.paths.out_dir);
  fs::create_directories(dir);
  return dir;
}

// Falls back to the file name the producing command writes under out_dir.
fs::path input_path(const std::string& configured, const fs::path& out_dir,
                    const char* default_name) {
  if (!configured.empty()) return fs::path(configured);
  return out_dir / default_name;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const ResolvedRun& run, const std::vector<fs::path>& artifacts) {
  json manifest;
  manifest["command"] = command;
  manifest["config_sha256"] = run.config_sha256;
  manifest["seed"] = {{"scenario", run.cfg.scenario.seed},
                      {"fusion", run.cfg.fusion.seed},
                      {"detector", run.cfg.detector.seed}};
  json files = json::object();
  for (const fs::path& artifact : artifacts) {
    files[artifact.filename().string()] = lifefuse::hash::sha256_file_hex(artifact);
  }
  manifest["artifacts"] = files;
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot open manifest.json for writing");
  out << manifest.dump(2) << '\n';
}

// The echo-level scene behind the probability streams: one matrix with a
// breathing target, one with static clutter only. Geometry is fixed; the
// scenario seed drives the noise.
constexpr std::size_t kEchoSlowSteps = 512;
constexpr std::size_t kEchoRangeBins = 32;
constexpr double kEchoSlowInterval_s = 0.05;

sim::PulseWaveform echo_pulse() {
  return sim::generate_pulse(sim::PulseKind::gaussian_monocycle, 4e9, 0.05e-9, 16);
}

sim::UwbChannelModel echo_channel(bool present) {
  sim::UwbChannelModel channel;
  channel.vital_path.amplitude = 1.0;
  channel.vital_path.base_delay_s = 0.8e-9;
  channel.vital_path.motion_amplitude_s = present ? 5e-12 : 0.0;
  channel.vital_path.breath_freq_hz = 0.3;
  channel.clutter_paths = {{0.8, 0.4e-9}, {0.5, 1.2e-9}};
  channel.noise_std = 0.02;
  return channel;
}

std::vector<svg::Series> history_series(const std::vector<io::HistoryRecord>& history) {
  svg::Series train{"train", {}, {}}, test{"test", {}, {}};
  for (const auto& rec : history) {
    train.x.push_back(static_cast<double>(rec.epoch));
    train.y.push_back(rec.train_loss);
    test.x.push_back(static_cast<double>(rec.epoch));
    test.y.push_back(rec.test_loss);
  }
  return {train, test};
}

int run_simulate(const CommonOpts& opts) {
  const ResolvedRun run = resolve_config(opts);
  const fs::path out_dir = ensure_out_dir(run.cfg);

  const sim::SensorStreams streams = sim::simulate_probability_streams(run.cfg.scenario);
  const fs::path streams_path = out_dir / "streams.csv";
  io::save_sensor_streams(streams_path, streams);

  const sim::PulseWaveform pulse = echo_pulse();
  const std::uint64_t echo_seed =
      lifefuse::derive_seed(run.cfg.scenario.seed, lifefuse::RngPurpose::echo_noise);
  const fs::path present_path = out_dir / "echo_present.bin";
  const fs::path absent_path = out_dir / "echo_absent.bin";
  io::save_echo_matrix(present_path,
                       sim::simulate_echo_matrix(echo_channel(true), pulse, kEchoSlowSteps,
                                                 kEchoRangeBins, kEchoSlowInterval_s, echo_seed));
  io::save_echo_matrix(absent_path,
                       sim::simulate_echo_matrix(echo_channel(false), pulse, kEchoSlowSteps,
                                                 kEchoRangeBins, kEchoSlowInterval_s,
                                                 echo_seed + 1));

  write_manifest(out_dir, "simulate", run,
                 {streams_path, present_path, fs::path(present_path) += ".json", absent_path,
                  fs::path(absent_path) += ".json"});
  std::printf("simulate: %zu steps -> %s\n", streams.size(), streams_path.string().c_str());
  return 0;
}

int run_train_uwb(const CommonOpts& opts) {
  const ResolvedRun run = resolve_config(opts);
  const fs::path out_dir = ensure_out_dir(run.cfg);
  const cli::DetectorConfig& dc = run.cfg.detector;

  const sim::PulseWaveform pulse = echo_pulse();
  std::vector<det::LabeledWindow> samples;
  for (const bool present : {true, false}) {
    const fs::path path = input_path(present ? run.cfg.paths.echo_present
                                             : run.cfg.paths.echo_absent,
                                     out_dir, present ? "echo_present.bin" : "echo_absent.bin");
    const sim::EchoMatrix echo = io::load_echo_matrix(path);
    for (auto& channels : det::uwb_window_features(echo, pulse, dc.window, dc.stride)) {
      samples.push_back({std::move(channels), present ? 1 : 0});
    }
  }

  det::ClassifierConfig model_cfg;
  model_cfg.in_channels = 2;
  model_cfg.input_length = dc.window;
  model_cfg.seed = dc.seed;
  det::ConvLstmClassifier model(model_cfg);
  det::DetectorTrainConfig train_cfg;
  train_cfg.epochs = dc.epochs;
  train_cfg.batch = dc.batch;
  train_cfg.learning_rate = dc.learning_rate;
  train_cfg.test_fraction = dc.test_fraction;
  train_cfg.seed = dc.seed;
  const det::DetectorTrainResult result = det::train_classifier(model, samples, train_cfg);

  const fs::path history_path = out_dir / "uwb_history.csv";
  const fs::path checkpoint_path = out_dir / "uwb_classifier.ckpt";
  io::save_history(history_path, result.history);
  lifefuse::nn::save_checkpoint(model.params(), checkpoint_path);

  std::vector<fs::path> artifacts{history_path, checkpoint_path};
  if (run.cfg.emit_plots) {
    const fs::path plot = out_dir / "uwb_loss.svg";
    svg::line_chart(plot, "Echo classifier training", "epoch", "binary cross-entropy",
                    history_series(result.history));
    artifacts.push_back(plot);
  }
  write_manifest(out_dir, "train-uwb", run, artifacts);
  std::printf("train-uwb: %zu windows, held-out accuracy %.4f\n", samples.size(),
              result.test_accuracy);
  return 0;
}

int run_train_fusion(const CommonOpts& opts) {
  const ResolvedRun run = resolve_config(opts);
  const fs::path out_dir = ensure_out_dir(run.cfg);

  const fs::path streams_path = input_path(run.cfg.paths.streams, out_dir, "streams.csv");
  const sim::SensorStreams streams = io::load_sensor_streams(streams_path);
  const auto samples =
      lifefuse::dsp::make_windows(streams, run.cfg.fusion.window, run.cfg.fusion.smooth_width);

  fu::FusionNetwork net(run.cfg.fusion);
  const fu::TrainResult result = fu::train(net, samples);

  const fs::path history_path = out_dir / "history.csv";
  const fs::path checkpoint_path = out_dir / "fusion.ckpt";
  io::save_history(history_path, result.history);
  lifefuse::nn::save_checkpoint(net.params(), checkpoint_path);

  std::vector<fs::path> artifacts{history_path, checkpoint_path};
  if (run.cfg.emit_plots) {
    const fs::path plot = out_dir / "loss.svg";
    svg::line_chart(plot, "Fusion training", "epoch", "loss", history_series(result.history));
    artifacts.push_back(plot);
  }
  write_manifest(out_dir, "train-fusion", run, artifacts);
  std::printf("train-fusion: %zu windows (%zu train / %zu test), final train %.4f test %.4f\n",
              samples.size(), result.split.train.size(), result.split.test.size(),
              result.history.back().train_loss, result.history.back().test_loss);
  return 0;
}

json metrics_to_json(const fu::Metrics& m) {
  return {{"loss", m.loss},
          {"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"roc_auc", m.roc_auc}};
}

int run_eval(const CommonOpts& opts) {
  const ResolvedRun run = resolve_config(opts);
  const fs::path out_dir = ensure_out_dir(run.cfg);
  const std::size_t G = run.cfg.fusion.window;

  const fs::path streams_path = input_path(run.cfg.paths.streams, out_dir, "streams.csv");
  const sim::SensorStreams streams = io::load_sensor_streams(streams_path);
  const auto samples = lifefuse::dsp::make_windows(streams, G, run.cfg.fusion.smooth_width);

  fu::FusionNetwork net(run.cfg.fusion);
  const fs::path checkpoint_path = input_path(run.cfg.paths.checkpoint, out_dir, "fusion.ckpt");
  lifefuse::nn::load_checkpoint(net.params(), checkpoint_path);

  // Held-out metrics reuse the training split; the prediction sequence
  // covers every window so the fit can be plotted over the whole stream.
  const fu::SplitIndices split = fu::chronological_split(samples.size(), G);
  std::vector<lifefuse::dsp::FusionSample> test_set;
  for (std::size_t k : split.test) test_set.push_back(samples[k]);
  bool has[2] = {false, false};
  for (const auto& s : test_set) has[s.label] = true;
  if (!has[0] || !has[1]) {
    throw std::invalid_argument(
        "eval: held-out windows all share one label; metrics need both classes "
        "(lengthen the stream or lower the stay probabilities)");
  }
  const fu::FusionEvaluation held_out = fu::evaluate(net, test_set);
  const fu::FusionEvaluation full = fu::evaluate(net, samples);

  json metrics;
  metrics["test_split"] = metrics_to_json(held_out.metrics);
  metrics["all_windows"] = metrics_to_json(full.metrics);
  const fs::path metrics_path = out_dir / "metrics.json";
  {
    std::ofstream out(metrics_path);
    if (!out) throw std::runtime_error("cannot open metrics.json for writing");
    out << metrics.dump(2) << '\n';
  }

  // Window k spans steps [k, k+G); its probability is stamped with the
  // time of the step it labels, the window's last.
  std::vector<double> times(samples.size());
  std::vector<double> truth(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    times[k] = streams.timestamps[k + G - 1];
    truth[k] = static_cast<double>(full.truth[k]);
  }
  const fs::path predictions_path = out_dir / "predictions.csv";
  io::save_predictions(predictions_path, times, full.predicted, truth);

  std::vector<fs::path> artifacts{metrics_path, predictions_path};
  if (run.cfg.emit_plots) {
    const fs::path plot = out_dir / "fit.svg";
    svg::line_chart(plot, "Predicted life probability", "time [s]", "probability",
                    {{"predicted", times, full.predicted}, {"truth", times, truth}});
    artifacts.push_back(plot);
  }
  write_manifest(out_dir, "eval", run, artifacts);
  std::printf("eval: test accuracy %.4f, test AUC %.4f (%zu held-out windows)\n",
              held_out.metrics.accuracy, held_out.metrics.roc_auc, test_set.size());
  return 0;
}

struct SweepVariant {
  const char* name;
  void (*apply)(fu::FusionConfig&);
};

// One knob per named run; layer3, conv3, drop0_8, and smooth5 pin the
// baseline values, the rest move a single parameter off it. The doubled
// smoothing width appears as no variant because the centered moving
// average only accepts odd widths.
constexpr SweepVariant kSweepVariants[] = {
    {"layer3", [](fu::FusionConfig& c) { c.branch_lstm_layers = 3; }},
    {"layer4", [](fu::FusionConfig& c) { c.branch_lstm_layers = 4; }},
    {"layer5", [](fu::FusionConfig& c) { c.branch_lstm_layers = 5; }},
    {"conv1", [](fu::FusionConfig& c) { c.kernel = 1; }},
    {"conv3", [](fu::FusionConfig& c) { c.kernel = 3; }},
    {"drop0_7", [](fu::FusionConfig& c) { c.keep_prob = 0.7; }},
    {"drop0_8", [](fu::FusionConfig& c) { c.keep_prob = 0.8; }},
    {"smooth5", [](fu::FusionConfig& c) { c.smooth_width = 5; }},
};

int run_sweep(const CommonOpts& opts) {
  const ResolvedRun run = resolve_config(opts);
  const fs::path out_dir = ensure_out_dir(run.cfg);

  const fs::path streams_path = input_path(run.cfg.paths.streams, out_dir, "streams.csv");
  const sim::SensorStreams streams = io::load_sensor_streams(streams_path);

  std::vector<fs::path> artifacts;
  std::vector<svg::Series> comparison;
  const fs::path combined_path = out_dir / "sweep.csv";
  std::ofstream combined(combined_path);
  if (!combined) throw std::runtime_error("cannot open sweep.csv for writing");
  combined << "variant,epoch,train_loss,test_loss\n";

  for (const SweepVariant& variant : kSweepVariants) {
    fu::FusionConfig cfg = run.cfg.fusion;
    variant.apply(cfg);
    cfg.validate();
    const auto samples = lifefuse::dsp::make_windows(streams, cfg.window, cfg.smooth_width);
    fu::FusionNetwork net(cfg);
    const fu::TrainResult result = fu::train(net, samples);

    const fs::path history_path = out_dir / ("history_" + std::string(variant.name) + ".csv");
    io::save_history(history_path, result.history);
    artifacts.push_back(history_path);

    svg::Series series{variant.name, {}, {}};
    for (const auto& rec : result.history) {
      combined << variant.name << ',' << rec.epoch << ','
               << io::detail::fixed9(rec.train_loss) << ',' << io::detail::fixed9(rec.test_loss)
               << '\n';
      series.x.push_back(static_cast<double>(rec.epoch));
      series.y.push_back(rec.test_loss);
    }
    comparison.push_back(std::move(series));
    std::printf("sweep %-8s final train %.4f test %.4f\n", variant.name,
                result.history.back().train_loss, result.history.back().test_loss);
  }
  combined.close();
  artifacts.push_back(combined_path);

  if (run.cfg.emit_plots) {
    const fs::path plot = out_dir / "sweep.svg";
    svg::line_chart(plot, "Single-variable comparison", "epoch", "test loss", comparison);
    artifacts.push_back(plot);
  }
  write_manifest(out_dir, "sweep", run, artifacts);
  return 0;
}

int run_report(const CommonOpts& opts) {
  const ResolvedRun run = resolve_config(opts);
  const fs::path out_dir = ensure_out_dir(run.cfg);

  const fs::path history_path = input_path(run.cfg.paths.history, out_dir, "history.csv");
  const fs::path predictions_path =
      input_path(run.cfg.paths.predictions, out_dir, "predictions.csv");

  std::vector<fs::path> artifacts;
  if (fs::exists(history_path)) {
    const auto history = io::load_history(history_path);
    const fs::path plot = out_dir / "loss.svg";
    svg::line_chart(plot, "Fusion training", "epoch", "loss", history_series(history));
    artifacts.push_back(plot);
  }
  if (fs::exists(predictions_path)) {
    const io::PredictionSeries series = io::load_predictions(predictions_path);
    const fs::path plot = out_dir / "fit.svg";
    svg::line_chart(plot, "Predicted life probability", "time [s]", "probability",
                    {{"predicted", series.timestamps, series.predicted},
                     {"truth", series.timestamps, series.truth}});
    artifacts.push_back(plot);
  }
  if (artifacts.empty()) {
    throw std::invalid_argument("report: neither " + history_path.string() + " nor " +
                                predictions_path.string() + " exists");
  }
  write_manifest(out_dir, "report", run, artifacts);
  std::printf("report: wrote %zu chart(s) to %s\n", artifacts.size(), out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-sensor life-detection pipeline"};
  app.require_subcommand(0, 1);

  CommonOpts opts;
  CLI::App* cmd_simulate =
      app.add_subcommand("simulate", "generate sensor streams and echo matrices");
  CLI::App* cmd_train_uwb =
      app.add_subcommand("train-uwb", "train the echo-level breathing classifier");
  CLI::App* cmd_train_fusion =
      app.add_subcommand("train-fusion", "train the three-branch fusion network");
  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a trained fusion checkpoint");
  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "train every named single-variable configuration");
  CLI::App* cmd_report = app.add_subcommand("report", "render charts from run artifacts");
  for (CLI::App* cmd : {cmd_simulate, cmd_train_uwb, cmd_train_fusion, cmd_eval, cmd_sweep,
                        cmd_report}) {
    add_common_options(cmd, opts);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_simulate->parsed()) return run_simulate(opts);
    if (cmd_train_uwb->parsed()) return run_train_uwb(opts);
    if (cmd_train_fusion->parsed()) return run_train_fusion(opts);
    if (cmd_eval->parsed()) return run_eval(opts);
    if (cmd_sweep->parsed()) return run_sweep(opts);
    if (cmd_report->parsed()) return run_report(opts);
    std::fputs(app.help().c_str(), stderr);
    return 2;
  } catch (const lifefuse::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
