#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lifefuse/errors.hpp"
#include "lifefuse/probability_stream.hpp"
#include "lifefuse/rng.hpp"

namespace lifefuse::sim {

inline constexpr double kPi = std::numbers::pi;

enum class PulseKind { gaussian_monocycle, gaussian };

// Transmitted fast-time waveform; peak absolute amplitude is 1.
struct PulseWaveform {
  std::vector<double> samples;
  double sample_interval = 0.0;  // fast-time T_f, seconds
};

struct VitalPath {
  double amplitude = 1.0;         // a_1
  double base_delay_s = 0.0;      // tau_0
  double motion_amplitude_s = 0;  // A, breathing delay swing
  double breath_freq_hz = 0.3;    // f_b
  double harmonic_amplitude_s = 0;  // heartbeat-like 2*f_b term, off by default
};

struct ClutterPath {
  double amplitude = 0.0;
  double delay_s = 0.0;  // constant over slow time
};

struct UwbChannelModel {
  VitalPath vital_path;
  std::vector<ClutterPath> clutter_paths;
  double noise_std = 0.0;
};

// Slow-time x fast-time echo matrix R(m,n), row-major.
struct EchoMatrix {
  std::size_t slow_steps = 0;  // M
  std::size_t range_bins = 0;  // N
  std::vector<double> data;
  double slow_interval_s = 0.0;  // T_s, reciprocal of the PRF
  double fast_interval_s = 0.0;  // T_f

  double& at(std::size_t m, std::size_t n) { return data[m * range_bins + n]; }
  double at(std::size_t m, std::size_t n) const { return data[m * range_bins + n]; }
};

inline PulseWaveform generate_pulse(PulseKind kind, double center_freq_hz, double sample_interval_s,
                                    std::size_t length) {
  if (length < 2) throw std::invalid_argument("generate_pulse: length must be >= 2");
  if (!(center_freq_hz > 0.0)) throw std::invalid_argument("generate_pulse: center_freq must be > 0");
  if (!(sample_interval_s > 0.0)) {
    throw std::invalid_argument("generate_pulse: sample_interval must be > 0");
  }
  // The monocycle spectrum |f| e^{-2(pi f sigma)^2} peaks at 1/(2 pi sigma);
  // choosing sigma this way puts the spectral peak at center_freq.
  const double sigma = 1.0 / (2.0 * kPi * center_freq_hz);
  PulseWaveform pulse;
  pulse.sample_interval = sample_interval_s;
  pulse.samples.resize(length);
  const double mid = (static_cast<double>(length) - 1.0) / 2.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double t = (static_cast<double>(i) - mid) * sample_interval_s;
    const double gauss = std::exp(-t * t / (2.0 * sigma * sigma));
    pulse.samples[i] = (kind == PulseKind::gaussian) ? gauss : -t / sigma * gauss;
    peak = std::max(peak, std::abs(pulse.samples[i]));
  }
  for (double& s : pulse.samples) s /= peak;
  return pulse;
}

namespace detail {

// Waveform value at fractional sample index via linear interpolation,
// zero outside the sampled support.
inline double sample_pulse(const std::vector<double>& samples, double index) {
  const double last = static_cast<double>(samples.size() - 1);
  if (index < 0.0 || index > last) return 0.0;
  const auto lo = static_cast<std::size_t>(index);
  if (lo + 1 >= samples.size()) return samples.back();
  const double frac = index - static_cast<double>(lo);
  return samples[lo] * (1.0 - frac) + samples[lo + 1] * frac;
}

}  // namespace detail

inline EchoMatrix simulate_echo_matrix(const UwbChannelModel& channel, const PulseWaveform& pulse,
                                       std::size_t M, std::size_t N, double T_s, std::uint64_t seed) {
  if (M < 2 || N < 2) throw std::invalid_argument("simulate_echo_matrix: M and N must be >= 2");
  if (!(T_s > 0.0)) throw std::invalid_argument("simulate_echo_matrix: T_s must be > 0");
  if (pulse.samples.size() < 2 || !(pulse.sample_interval > 0.0)) {
    throw std::invalid_argument("simulate_echo_matrix: invalid pulse");
  }
  const double T_f = pulse.sample_interval;
  const double window_s = static_cast<double>(N) * T_f;
  if (static_cast<double>(pulse.samples.size()) * T_f >= window_s) {
    throw std::invalid_argument("simulate_echo_matrix: pulse does not fit the fast-time window");
  }
  const VitalPath& vp = channel.vital_path;
  const double prf = 1.0 / T_s;
  if (!(vp.breath_freq_hz > 0.0) || vp.breath_freq_hz >= prf / 2.0) {
    throw std::invalid_argument("simulate_echo_matrix: breath_freq must lie in (0, PRF/2)");
  }
  if (vp.motion_amplitude_s < 0.0 || vp.harmonic_amplitude_s < 0.0 || vp.base_delay_s < 0.0) {
    throw std::invalid_argument("simulate_echo_matrix: vital path delays must be >= 0");
  }
  const double vital_max_delay = vp.base_delay_s + vp.motion_amplitude_s + vp.harmonic_amplitude_s;
  if (vital_max_delay > window_s) {
    throw std::invalid_argument("simulate_echo_matrix: path 0 (vital) delay exceeds fast-time window");
  }
  for (std::size_t i = 0; i < channel.clutter_paths.size(); ++i) {
    const ClutterPath& cp = channel.clutter_paths[i];
    if (cp.delay_s < 0.0) {
      throw std::invalid_argument("simulate_echo_matrix: path " + std::to_string(i + 1) +
                                  " has negative delay");
    }
    if (cp.delay_s > window_s) {
      throw std::invalid_argument("simulate_echo_matrix: path " + std::to_string(i + 1) +
                                  " delay exceeds fast-time window");
    }
  }
  if (channel.noise_std < 0.0) {
    throw std::invalid_argument("simulate_echo_matrix: noise_std must be >= 0");
  }

  EchoMatrix echo;
  echo.slow_steps = M;
  echo.range_bins = N;
  echo.slow_interval_s = T_s;
  echo.fast_interval_s = T_f;
  echo.data.assign(M * N, 0.0);

  for (std::size_t m = 0; m < M; ++m) {
    const double slow_t = static_cast<double>(m) * T_s;
    const double tau_vital = vp.base_delay_s +
                             vp.motion_amplitude_s * std::sin(2.0 * kPi * vp.breath_freq_hz * slow_t) +
                             vp.harmonic_amplitude_s * std::sin(4.0 * kPi * vp.breath_freq_hz * slow_t);
    for (std::size_t n = 0; n < N; ++n) {
      const double fast_t = static_cast<double>(n) * T_f;
      double value = vp.amplitude * detail::sample_pulse(pulse.samples, (fast_t - tau_vital) / T_f);
      for (const ClutterPath& cp : channel.clutter_paths) {
        value += cp.amplitude * detail::sample_pulse(pulse.samples, (fast_t - cp.delay_s) / T_f);
      }
      echo.at(m, n) = value;
    }
  }
  if (channel.noise_std > 0.0) {
    auto eng = make_engine(seed, RngPurpose::echo_noise);
    std::normal_distribution<double> noise(0.0, channel.noise_std);
    for (double& v : echo.data) v += noise(eng);
  }
  return echo;
}

struct SensorProfile {
  double mean_prob_present = 0.75;
  double mean_prob_absent = 0.25;
  double concentration = 5.0;     // Beta concentration kappa; mean*kappa = alpha
  double interference_rate = 0.0; // long-run fraction of degraded steps
};

enum class InterferenceMode {
  independent,  // per-sensor random episodes at the configured rate
  round_robin,  // fixed schedule, one sensor at a time, never overlapping
};

struct ScenarioConfig {
  double duration_s = 1000.0;
  double step_s = 1.0;
  double stay_present = 0.97;  // P(present -> present)
  double stay_absent = 0.97;   // P(absent -> absent)
  bool initial_present = true;
  SensorProfile uwb, infrared, acoustic;
  InterferenceMode interference_mode = InterferenceMode::independent;
  std::size_t interference_episode_steps = 25;  // mean episode length
  std::uint64_t seed = 1;

  void validate() const {
    if (!(duration_s > 0.0)) throw std::invalid_argument("ScenarioConfig: duration must be > 0");
    if (!(step_s > 0.0)) throw std::invalid_argument("ScenarioConfig: step must be > 0");
    auto check01 = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string("ScenarioConfig: ") + name + " out of [0,1]");
      }
    };
    check01(stay_present, "stay_present");
    check01(stay_absent, "stay_absent");
    for (const SensorProfile* p : {&uwb, &infrared, &acoustic}) {
      check01(p->mean_prob_present, "mean_prob_present");
      check01(p->mean_prob_absent, "mean_prob_absent");
      check01(p->interference_rate, "interference_rate");
      if (!(p->concentration > 0.0)) {
        throw std::invalid_argument("ScenarioConfig: concentration must be > 0");
      }
    }
    if (interference_episode_steps < 1) {
      throw std::invalid_argument("ScenarioConfig: interference_episode_steps must be >= 1");
    }
  }
};

// Shared-clock tri-sensor probability streams with one label sequence.
struct SensorStreams {
  std::vector<double> timestamps;
  ProbabilityStream uwb, infrared, acoustic;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  const ProbabilityStream& stream(std::size_t sensor) const {
    switch (sensor) {
      case 0: return uwb;
      case 1: return infrared;
      case 2: return acoustic;
      default: throw std::invalid_argument("SensorStreams: sensor index must be 0, 1, or 2");
    }
  }

  void validate() const {
    if (timestamps.size() != labels.size()) {
      throw std::invalid_argument("SensorStreams: timestamps and labels differ in length");
    }
    for (const ProbabilityStream* s : {&uwb, &infrared, &acoustic}) {
      if (s->size() != labels.size()) {
        throw std::invalid_argument("SensorStreams: stream length differs from labels");
      }
      s->validate();
    }
  }
};

namespace detail {

// Beta(mean*kappa, (1-mean)*kappa) via two gamma draws; means are nudged
// off 0 and 1 to keep both shape parameters positive.
inline double sample_beta(std::mt19937_64& eng, double mean, double concentration) {
  const double mu = std::clamp(mean, 1e-6, 1.0 - 1e-6);
  std::gamma_distribution<double> ga(mu * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - mu) * concentration, 1.0);
  const double a = ga(eng);
  const double b = gb(eng);
  const double sum = a + b;
  if (sum <= 0.0) return mu;
  return std::clamp(a / sum, 0.0, 1.0);
}

}  // namespace detail

inline SensorStreams simulate_probability_streams(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto steps = static_cast<std::size_t>(std::llround(cfg.duration_s / cfg.step_s));
  if (steps < 1) throw std::invalid_argument("ScenarioConfig: duration shorter than one step");

  auto eng = make_engine(cfg.seed, RngPurpose::scenario);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SensorStreams out;
  out.timestamps.resize(steps);
  out.labels.resize(steps);
  bool present = cfg.initial_present;
  for (std::size_t k = 0; k < steps; ++k) {
    out.timestamps[k] = static_cast<double>(k) * cfg.step_s;
    out.labels[k] = present ? 1 : 0;
    const double stay = present ? cfg.stay_present : cfg.stay_absent;
    if (unit(eng) >= stay) present = !present;
  }

  const SensorProfile profiles[3] = {cfg.uwb, cfg.infrared, cfg.acoustic};
  std::array<std::vector<char>, 3> degraded;
  for (std::size_t s = 0; s < 3; ++s) {
    degraded[s].assign(steps, 0);
    const double rate = profiles[s].interference_rate;
    if (rate <= 0.0) continue;
    if (cfg.interference_mode == InterferenceMode::round_robin) {
      // Deterministic 5-slot cycle: sensor s is degraded during slot s,
      // slots 3 and 4 are clean, so each sensor sits at a 20% duty cycle
      // and no two sensors are ever degraded together.
      const std::size_t slot = cfg.interference_episode_steps;
      for (std::size_t k = 0; k < steps; ++k) {
        degraded[s][k] = ((k / slot) % 5 == s) ? 1 : 0;
      }
    } else {
      // Two-state episode chain with stationary degraded fraction = rate
      // and mean episode length = interference_episode_steps.
      const double mean_len = static_cast<double>(cfg.interference_episode_steps);
      const double p_exit = 1.0 / mean_len;
      const double p_enter = std::min(1.0, rate * p_exit / std::max(1e-12, 1.0 - rate));
      bool in_episode = false;
      for (std::size_t k = 0; k < steps; ++k) {
        const double u = unit(eng);
        if (in_episode) {
          degraded[s][k] = 1;
          if (u < p_exit) in_episode = false;
        } else {
          if (u < p_enter) {
            in_episode = true;
            degraded[s][k] = 1;
          }
        }
      }
    }
  }

  ProbabilityStream* sensors[3] = {&out.uwb, &out.infrared, &out.acoustic};
  for (std::size_t s = 0; s < 3; ++s) {
    sensors[s]->timestamps = out.timestamps;
    sensors[s]->labels = out.labels;
    sensors[s]->probs.resize(steps);
  }
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t s = 0; s < 3; ++s) {
      const SensorProfile& prof = profiles[s];
      double mean = out.labels[k] ? prof.mean_prob_present : prof.mean_prob_absent;
      if (degraded[s][k]) mean = 0.5;  // uninformative under interference
      sensors[s]->probs[k] = detail::sample_beta(eng, mean, prof.concentration);
    }
  }
  return out;
}

// Acoustic scene: a low-frequency respiration tone plus a periodic train of
// decaying 20 Hz knock bursts while life is present, white noise always.
inline constexpr double kAcousticToneAmplitude = 0.3;
inline constexpr double kAcousticBurstDecay_s = 0.05;
inline constexpr double kAcousticBurstCarrier_hz = 20.0;
inline constexpr double kAcousticBurstDuration_s = 0.25;

inline std::vector<double> simulate_acoustic(const std::vector<int>& presence, double breath_freq_hz,
                                             double tap_rate_hz, double noise_std, double sample_rate_hz,
                                             std::uint64_t seed, double step_duration_s = 1.0) {
  if (!(breath_freq_hz > 0.0) || !(tap_rate_hz > 0.0)) {
    throw std::invalid_argument("simulate_acoustic: rates must be > 0");
  }
  if (!(sample_rate_hz > 2.0 * std::max(breath_freq_hz, tap_rate_hz))) {
    throw std::invalid_argument("simulate_acoustic: sample_rate below the Nyquist requirement");
  }
  if (noise_std < 0.0) throw std::invalid_argument("simulate_acoustic: noise_std must be >= 0");
  if (!(step_duration_s > 0.0)) {
    throw std::invalid_argument("simulate_acoustic: step_duration must be > 0");
  }
  const auto per_step = static_cast<std::size_t>(std::llround(sample_rate_hz * step_duration_s));
  if (per_step < 1) throw std::invalid_argument("simulate_acoustic: step shorter than one sample");

  const std::size_t total = presence.size() * per_step;
  std::vector<double> signal(total, 0.0);
  const double dt = 1.0 / sample_rate_hz;
  const double tap_period = 1.0 / tap_rate_hz;
  for (std::size_t step = 0; step < presence.size(); ++step) {
    if (!presence[step]) continue;
    for (std::size_t j = 0; j < per_step; ++j) {
      const std::size_t idx = step * per_step + j;
      const double t = static_cast<double>(idx) * dt;
      double v = kAcousticToneAmplitude * std::sin(2.0 * kPi * breath_freq_hz * t);
      // Bursts young enough to still be ringing at time t.
      const auto last_tap = static_cast<long long>(std::floor(t / tap_period));
      for (long long tap = last_tap; tap >= 0; --tap) {
        const double age = t - static_cast<double>(tap) * tap_period;
        if (age >= kAcousticBurstDuration_s) break;
        v += std::exp(-age / kAcousticBurstDecay_s) *
             std::sin(2.0 * kPi * kAcousticBurstCarrier_hz * age);
      }
      signal[idx] = v;
    }
  }
  if (noise_std > 0.0) {
    auto eng = make_engine(seed, RngPurpose::acoustic_noise);
    std::normal_distribution<double> noise(0.0, noise_std);
    for (double& v : signal) v += noise(eng);
  }
  return signal;
}

}  // namespace lifefuse::sim
