#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lifefuse/errors.hpp"
#include "lifefuse/probability_stream.hpp"
#include "lifefuse/signal_sim.hpp"

namespace lifefuse::io {

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string fixed9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

inline double parse_double(std::string_view field, std::size_t line, const std::string& what) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError(what + ": line " + std::to_string(line) + ": cannot parse '" +
                     std::string(field) + "' as a number");
  }
  return value;
}

inline std::vector<std::string_view> split_fields(std::string_view row) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = row.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(row.substr(start));
      break;
    }
    fields.push_back(row.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline int parse_label(std::string_view field, std::size_t line, const std::string& what) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw ParseError(what + ": line " + std::to_string(line) + ": label must be 0 or 1, got '" +
                   std::string(field) + "'");
}

inline void check_prob_range(double p, std::size_t line, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(what + ": line " + std::to_string(line) + ": probability " +
                                fixed6(p) + " outside [0,1]");
  }
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode extra = {}) {
  std::ofstream out(path, std::ios::out | extra);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode extra = {}) {
  std::ifstream in(path, std::ios::in | extra);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline constexpr const char* kStreamHeader = "t,prob,label";
inline constexpr const char* kSensorHeader = "t,prob_uwb,prob_ir,prob_ac,label";
inline constexpr const char* kHistoryHeader = "epoch,train_loss,test_loss";
inline constexpr const char* kPredictionHeader = "t,pred,truth";

inline void save_probability_stream(const std::filesystem::path& path,
                                    const ProbabilityStream& stream) {
  stream.validate();
  auto out = detail::open_out(path);
  out << kStreamHeader << '\n';
  for (std::size_t i = 0; i < stream.size(); ++i) {
    out << detail::fixed6(stream.timestamps[i]) << ',' << detail::fixed6(stream.probs[i]) << ','
        << stream.labels[i] << '\n';
  }
}

inline ProbabilityStream load_probability_stream(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const std::string what = "probability stream " + path.filename().string();
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kStreamHeader) {
    throw ParseError(what + ": line 1: expected header '" + kStreamHeader + "'");
  }
  ProbabilityStream stream;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 3) {
      throw ParseError(what + ": line " + std::to_string(lineno) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    const double t = detail::parse_double(fields[0], lineno, what);
    const double p = detail::parse_double(fields[1], lineno, what);
    detail::check_prob_range(p, lineno, what);
    stream.timestamps.push_back(t);
    stream.probs.push_back(p);
    stream.labels.push_back(detail::parse_label(fields[2], lineno, what));
  }
  stream.validate();
  return stream;
}

inline void save_sensor_streams(const std::filesystem::path& path,
                                const sim::SensorStreams& streams) {
  streams.validate();
  auto out = detail::open_out(path);
  out << kSensorHeader << '\n';
  for (std::size_t i = 0; i < streams.timestamps.size(); ++i) {
    out << detail::fixed6(streams.timestamps[i]) << ',' << detail::fixed6(streams.uwb.probs[i])
        << ',' << detail::fixed6(streams.infrared.probs[i]) << ','
        << detail::fixed6(streams.acoustic.probs[i]) << ',' << streams.labels[i] << '\n';
  }
}

inline sim::SensorStreams load_sensor_streams(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const std::string what = "sensor streams " + path.filename().string();
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kSensorHeader) {
    throw ParseError(what + ": line 1: expected header '" + kSensorHeader + "'");
  }
  sim::SensorStreams streams;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 5) {
      throw ParseError(what + ": line " + std::to_string(lineno) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    const double t = detail::parse_double(fields[0], lineno, what);
    const int label = detail::parse_label(fields[4], lineno, what);
    double probs[3];
    for (int s = 0; s < 3; ++s) {
      probs[s] = detail::parse_double(fields[1 + s], lineno, what);
      detail::check_prob_range(probs[s], lineno, what);
    }
    streams.timestamps.push_back(t);
    streams.labels.push_back(label);
    streams.uwb.timestamps.push_back(t);
    streams.uwb.probs.push_back(probs[0]);
    streams.uwb.labels.push_back(label);
    streams.infrared.timestamps.push_back(t);
    streams.infrared.probs.push_back(probs[1]);
    streams.infrared.labels.push_back(label);
    streams.acoustic.timestamps.push_back(t);
    streams.acoustic.probs.push_back(probs[2]);
    streams.acoustic.labels.push_back(label);
  }
  streams.validate();
  return streams;
}

struct HistoryRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
};

inline void save_history(const std::filesystem::path& path,
                         const std::vector<HistoryRecord>& history) {
  auto out = detail::open_out(path);
  out << kHistoryHeader << '\n';
  for (const auto& rec : history) {
    out << rec.epoch << ',' << detail::fixed9(rec.train_loss) << ','
        << detail::fixed9(rec.test_loss) << '\n';
  }
}

inline std::vector<HistoryRecord> load_history(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const std::string what = "history " + path.filename().string();
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kHistoryHeader) {
    throw ParseError(what + ": line 1: expected header '" + kHistoryHeader + "'");
  }
  std::vector<HistoryRecord> history;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 3) {
      throw ParseError(what + ": line " + std::to_string(lineno) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    HistoryRecord rec;
    rec.epoch = static_cast<std::size_t>(detail::parse_double(fields[0], lineno, what));
    rec.train_loss = detail::parse_double(fields[1], lineno, what);
    rec.test_loss = detail::parse_double(fields[2], lineno, what);
    history.push_back(rec);
  }
  return history;
}

inline void save_predictions(const std::filesystem::path& path,
                             const std::vector<double>& timestamps,
                             const std::vector<double>& predicted,
                             const std::vector<double>& truth) {
  if (timestamps.size() != predicted.size() || predicted.size() != truth.size()) {
    throw std::invalid_argument("predictions: timestamp, prediction, and truth lengths differ");
  }
  auto out = detail::open_out(path);
  out << kPredictionHeader << '\n';
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    out << detail::fixed6(timestamps[i]) << ',' << detail::fixed6(predicted[i]) << ','
        << detail::fixed6(truth[i]) << '\n';
  }
}

struct PredictionSeries {
  std::vector<double> timestamps;
  std::vector<double> predicted;
  std::vector<double> truth;
};

inline PredictionSeries load_predictions(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const std::string what = "predictions " + path.filename().string();
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kPredictionHeader) {
    throw ParseError(what + ": line 1: expected header '" + kPredictionHeader + "'");
  }
  PredictionSeries series;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 3) {
      throw ParseError(what + ": line " + std::to_string(lineno) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    series.timestamps.push_back(detail::parse_double(fields[0], lineno, what));
    series.predicted.push_back(detail::parse_double(fields[1], lineno, what));
    series.truth.push_back(detail::parse_double(fields[2], lineno, what));
  }
  return series;
}

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

inline std::uint64_t read_u64_le(std::istream& in, const std::string& what) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw ParseError(what + ": truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

inline void write_f64_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  write_u64_le(out, bits);
}

inline double read_f64_le(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read_u64_le(in, what));
}

}  // namespace detail

// Echo matrices are stored as a 24-byte header (row count, column
// count, reserved zero word; little-endian u64) followed by row-major
// float64 samples, with the two sampling intervals in a JSON sidecar
// next to the binary.
inline void save_echo_matrix(const std::filesystem::path& path, const sim::EchoMatrix& echo) {
  auto out = detail::open_out(path, std::ios::binary);
  detail::write_u64_le(out, echo.slow_steps);
  detail::write_u64_le(out, echo.range_bins);
  detail::write_u64_le(out, 0);
  for (double v : echo.data) detail::write_f64_le(out, v);
  if (!out) throw std::runtime_error("echo matrix: write to " + path.string() + " failed");

  nlohmann::json sidecar;
  sidecar["slow_interval_s"] = echo.slow_interval_s;
  sidecar["fast_interval_s"] = echo.fast_interval_s;
  auto meta = detail::open_out(std::filesystem::path(path) += ".json");
  meta << sidecar.dump(2) << '\n';
}

inline sim::EchoMatrix load_echo_matrix(const std::filesystem::path& path) {
  const std::string what = "echo matrix " + path.filename().string();
  auto in = detail::open_in(path, std::ios::binary);
  sim::EchoMatrix echo;
  echo.slow_steps = detail::read_u64_le(in, what);
  echo.range_bins = detail::read_u64_le(in, what);
  const std::uint64_t reserved = detail::read_u64_le(in, what);
  if (reserved != 0) throw ParseError(what + ": reserved header word is not zero");
  if (echo.slow_steps == 0 || echo.range_bins == 0) {
    throw ParseError(what + ": empty matrix dimensions");
  }
  echo.data.resize(echo.slow_steps * echo.range_bins);
  for (double& v : echo.data) v = detail::read_f64_le(in, what);

  auto meta = detail::open_in(std::filesystem::path(path) += ".json");
  nlohmann::json sidecar;
  try {
    meta >> sidecar;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": malformed sidecar: " + e.what());
  }
  echo.slow_interval_s = sidecar.at("slow_interval_s").get<double>();
  echo.fast_interval_s = sidecar.at("fast_interval_s").get<double>();
  return echo;
}

}  // namespace lifefuse::io
