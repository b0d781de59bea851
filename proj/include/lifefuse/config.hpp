#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lifefuse/errors.hpp"
#include "lifefuse/fusion.hpp"
#include "lifefuse/signal_sim.hpp"

namespace lifefuse::cli {

using nlohmann::json;

// Knobs for the echo-level UWB detector training command. The window and
// stride act on the slow-time axis of the echo matrix.
struct DetectorConfig {
  std::size_t window = 64;
  std::size_t stride = 16;
  std::size_t epochs = 10;
  std::size_t batch = 16;
  double learning_rate = 1e-2;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const {
    if (window < 2) throw std::invalid_argument("DetectorConfig: window must be >= 2");
    if (stride < 1) throw std::invalid_argument("DetectorConfig: stride must be >= 1");
    if (epochs < 1) throw std::invalid_argument("DetectorConfig: epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("DetectorConfig: batch must be >= 1");
    if (!(learning_rate > 0.0)) {
      throw std::invalid_argument("DetectorConfig: learning_rate must be > 0");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
      throw std::invalid_argument("DetectorConfig: test_fraction must be in (0, 1)");
    }
  }
};

// Input and output locations. Empty input paths fall back to the file the
// producing command writes under out_dir, so a pipeline of commands sharing
// one out_dir needs no explicit wiring.
struct RunPaths {
  std::string out_dir = "out";
  std::string streams;
  std::string echo_present;
  std::string echo_absent;
  std::string checkpoint;
  std::string history;
  std::string predictions;
};

struct RunConfig {
  sim::ScenarioConfig scenario;
  fusion::FusionConfig fusion;
  DetectorConfig detector;
  RunPaths paths;
  bool emit_plots = true;

  void validate() const {
    scenario.validate();
    fusion.validate();
    detector.validate();
    if (paths.out_dir.empty()) throw std::invalid_argument("RunConfig: out_dir must be set");
  }
};

namespace detail {

inline json profile_to_json(const sim::SensorProfile& p) {
  return {{"mean_prob_present", p.mean_prob_present},
          {"mean_prob_absent", p.mean_prob_absent},
          {"concentration", p.concentration},
          {"interference_rate", p.interference_rate}};
}

inline const char* mode_name(sim::InterferenceMode mode) {
  return mode == sim::InterferenceMode::round_robin ? "round_robin" : "independent";
}

inline const char* loss_name(fusion::LossKind loss) {
  return loss == fusion::LossKind::mse ? "mse" : "bce";
}

// Pulls typed values out of one JSON object and rejects keys that are not
// part of the schema, naming them by dotted path. Every getter consumes its
// key; finish() reports whatever was left over.
class SectionReader {
 public:
  SectionReader(const json& obj, std::string prefix) : prefix_(std::move(prefix)) {
    if (!obj.is_object()) {
      throw std::invalid_argument("config: section '" + prefix_ + "' must be a JSON object");
    }
    remaining_ = obj;
  }

  template <typename T>
  void get(const char* key, T& out) {
    const auto it = remaining_.find(key);
    if (it == remaining_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: key '" + dotted(key) + "': " + e.what());
    }
    remaining_.erase(it);
  }

  json take(const char* key) {
    const auto it = remaining_.find(key);
    if (it == remaining_.end()) return json();
    json section = *it;
    remaining_.erase(it);
    return section;
  }

  void finish() const {
    if (!remaining_.empty()) {
      throw std::invalid_argument("config: unknown key '" + dotted(remaining_.begin().key()) +
                                  "'");
    }
  }

  std::string dotted(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

 private:
  std::string prefix_;
  json remaining_;
};

inline sim::SensorProfile profile_from_json(const json& obj, const std::string& prefix) {
  sim::SensorProfile p;
  SectionReader reader(obj, prefix);
  reader.get("mean_prob_present", p.mean_prob_present);
  reader.get("mean_prob_absent", p.mean_prob_absent);
  reader.get("concentration", p.concentration);
  reader.get("interference_rate", p.interference_rate);
  reader.finish();
  return p;
}

}  // namespace detail

inline json to_json(const RunConfig& cfg) {
  json j;
  j["scenario"] = {{"duration_s", cfg.scenario.duration_s},
                   {"step_s", cfg.scenario.step_s},
                   {"stay_present", cfg.scenario.stay_present},
                   {"stay_absent", cfg.scenario.stay_absent},
                   {"initial_present", cfg.scenario.initial_present},
                   {"uwb", detail::profile_to_json(cfg.scenario.uwb)},
                   {"infrared", detail::profile_to_json(cfg.scenario.infrared)},
                   {"acoustic", detail::profile_to_json(cfg.scenario.acoustic)},
                   {"interference_mode", detail::mode_name(cfg.scenario.interference_mode)},
                   {"interference_episode_steps", cfg.scenario.interference_episode_steps},
                   {"seed", cfg.scenario.seed}};
  j["fusion"] = {{"window", cfg.fusion.window},
                 {"smooth_width", cfg.fusion.smooth_width},
                 {"conv_channels", cfg.fusion.conv_channels},
                 {"kernel", cfg.fusion.kernel},
                 {"branch_lstm_layers", cfg.fusion.branch_lstm_layers},
                 {"branch_hidden", cfg.fusion.branch_hidden},
                 {"fusion_hidden_1", cfg.fusion.fusion_hidden_1},
                 {"fusion_hidden_2", cfg.fusion.fusion_hidden_2},
                 {"dense_widths", cfg.fusion.dense_widths},
                 {"keep_prob", cfg.fusion.keep_prob},
                 {"loss", detail::loss_name(cfg.fusion.loss)},
                 {"epochs", cfg.fusion.epochs},
                 {"batch", cfg.fusion.batch},
                 {"sensor_weights", cfg.fusion.sensor_weights},
                 {"learning_rate", cfg.fusion.learning_rate},
                 {"seed", cfg.fusion.seed}};
  j["detector"] = {{"window", cfg.detector.window},
                   {"stride", cfg.detector.stride},
                   {"epochs", cfg.detector.epochs},
                   {"batch", cfg.detector.batch},
                   {"learning_rate", cfg.detector.learning_rate},
                   {"test_fraction", cfg.detector.test_fraction},
                   {"seed", cfg.detector.seed}};
  j["paths"] = {{"out_dir", cfg.paths.out_dir},
                {"streams", cfg.paths.streams},
                {"echo_present", cfg.paths.echo_present},
                {"echo_absent", cfg.paths.echo_absent},
                {"checkpoint", cfg.paths.checkpoint},
                {"history", cfg.paths.history},
                {"predictions", cfg.paths.predictions}};
  j["emit_plots"] = cfg.emit_plots;
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  detail::SectionReader top(j, "");

  const json scenario = top.take("scenario");
  if (!scenario.is_null()) {
    detail::SectionReader reader(scenario, "scenario");
    reader.get("duration_s", cfg.scenario.duration_s);
    reader.get("step_s", cfg.scenario.step_s);
    reader.get("stay_present", cfg.scenario.stay_present);
    reader.get("stay_absent", cfg.scenario.stay_absent);
    reader.get("initial_present", cfg.scenario.initial_present);
    const json uwb = reader.take("uwb");
    if (!uwb.is_null()) cfg.scenario.uwb = detail::profile_from_json(uwb, "scenario.uwb");
    const json infrared = reader.take("infrared");
    if (!infrared.is_null()) {
      cfg.scenario.infrared = detail::profile_from_json(infrared, "scenario.infrared");
    }
    const json acoustic = reader.take("acoustic");
    if (!acoustic.is_null()) {
      cfg.scenario.acoustic = detail::profile_from_json(acoustic, "scenario.acoustic");
    }
    std::string mode = detail::mode_name(cfg.scenario.interference_mode);
    reader.get("interference_mode", mode);
    if (mode == "independent") {
      cfg.scenario.interference_mode = sim::InterferenceMode::independent;
    } else if (mode == "round_robin") {
      cfg.scenario.interference_mode = sim::InterferenceMode::round_robin;
    } else {
      throw std::invalid_argument(
          "config: key 'scenario.interference_mode': expected 'independent' or 'round_robin', "
          "got '" +
          mode + "'");
    }
    reader.get("interference_episode_steps", cfg.scenario.interference_episode_steps);
    reader.get("seed", cfg.scenario.seed);
    reader.finish();
  }

  const json fusion = top.take("fusion");
  if (!fusion.is_null()) {
    detail::SectionReader reader(fusion, "fusion");
    reader.get("window", cfg.fusion.window);
    // Stage widths follow the window unless the file pins them explicitly.
    cfg.fusion = fusion::FusionConfig::defaults(cfg.fusion.window);
    reader.get("smooth_width", cfg.fusion.smooth_width);
    reader.get("conv_channels", cfg.fusion.conv_channels);
    reader.get("kernel", cfg.fusion.kernel);
    reader.get("branch_lstm_layers", cfg.fusion.branch_lstm_layers);
    reader.get("branch_hidden", cfg.fusion.branch_hidden);
    reader.get("fusion_hidden_1", cfg.fusion.fusion_hidden_1);
    reader.get("fusion_hidden_2", cfg.fusion.fusion_hidden_2);
    reader.get("dense_widths", cfg.fusion.dense_widths);
    reader.get("keep_prob", cfg.fusion.keep_prob);
    std::string loss = detail::loss_name(cfg.fusion.loss);
    reader.get("loss", loss);
    if (loss == "bce") {
      cfg.fusion.loss = fusion::LossKind::bce;
    } else if (loss == "mse") {
      cfg.fusion.loss = fusion::LossKind::mse;
    } else {
      throw std::invalid_argument("config: key 'fusion.loss': expected 'bce' or 'mse', got '" +
                                  loss + "'");
    }
    reader.get("epochs", cfg.fusion.epochs);
    reader.get("batch", cfg.fusion.batch);
    reader.get("sensor_weights", cfg.fusion.sensor_weights);
    reader.get("learning_rate", cfg.fusion.learning_rate);
    reader.get("seed", cfg.fusion.seed);
    reader.finish();
  }

  const json detector = top.take("detector");
  if (!detector.is_null()) {
    detail::SectionReader reader(detector, "detector");
    reader.get("window", cfg.detector.window);
    reader.get("stride", cfg.detector.stride);
    reader.get("epochs", cfg.detector.epochs);
    reader.get("batch", cfg.detector.batch);
    reader.get("learning_rate", cfg.detector.learning_rate);
    reader.get("test_fraction", cfg.detector.test_fraction);
    reader.get("seed", cfg.detector.seed);
    reader.finish();
  }

  const json paths = top.take("paths");
  if (!paths.is_null()) {
    detail::SectionReader reader(paths, "paths");
    reader.get("out_dir", cfg.paths.out_dir);
    reader.get("streams", cfg.paths.streams);
    reader.get("echo_present", cfg.paths.echo_present);
    reader.get("echo_absent", cfg.paths.echo_absent);
    reader.get("checkpoint", cfg.paths.checkpoint);
    reader.get("history", cfg.paths.history);
    reader.get("predictions", cfg.paths.predictions);
    reader.finish();
  }

  top.get("emit_plots", cfg.emit_plots);
  top.finish();
  cfg.validate();
  return cfg;
}

// Named starting points. "standard" is the plain 64-step protocol,
// "experiment" the sweep shape (32-step windows, MSE loss), and
// "interference" the degraded-sensor setup where fusion has to out-score
// the single sensors.
inline RunConfig preset(const std::string& name) {
  RunConfig cfg;
  if (name == "standard") {
    cfg.fusion = fusion::FusionConfig::standard();
  } else if (name == "experiment") {
    cfg.fusion = fusion::FusionConfig::experiment();
  } else if (name == "interference") {
    cfg.scenario.duration_s = 2000.0;
    cfg.scenario.interference_mode = sim::InterferenceMode::round_robin;
    for (sim::SensorProfile* p :
         {&cfg.scenario.uwb, &cfg.scenario.infrared, &cfg.scenario.acoustic}) {
      p->interference_rate = 0.2;
      p->mean_prob_present = 0.65;
      p->mean_prob_absent = 0.35;
      p->concentration = 1.5;
    }
    cfg.fusion = fusion::FusionConfig::defaults(16);
  } else {
    throw std::invalid_argument("preset: unknown preset '" + name +
                                "' (expected standard, experiment, or interference)");
  }
  return cfg;
}

// Overlays `patch` onto `base` key by key, descending into objects so a
// partial config file only touches the keys it names.
inline void merge_json(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [key, value] : patch.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object()) {
      merge_json(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

// Applies one `dotted.path=value` override. The path must name an existing
// key so typos fail loudly instead of silently adding dead configuration.
inline void apply_override(json& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
  }
  const std::string dotted = assignment.substr(0, eq);
  const std::string raw_value = assignment.substr(eq + 1);

  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (!node->is_object() || !node->contains(key)) {
      throw std::invalid_argument("override names unknown config key '" + dotted + "'");
    }
    if (dot == std::string::npos) {
      json value = json::parse(raw_value, nullptr, false);
      // Bare words that are not valid JSON pass through as strings.
      if (value.is_discarded()) value = raw_value;
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.filename().string() + ": " + e.what());
  }
}

}  // namespace lifefuse::cli
