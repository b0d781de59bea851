#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lifefuse::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Escapes the three characters that would break out of text content.
inline std::string escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  void widen(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  // A flat or single-point series still needs a drawable span.
  void pad_if_degenerate() {
    if (hi > lo) return;
    const double pad = std::max(1.0, std::abs(hi)) * 0.5;
    lo -= pad;
    hi += pad;
  }

  double scale(double v, double out_lo, double out_hi) const {
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo);
  }
};

}  // namespace detail

// Writes a self-contained line chart. Output is fully determined by the
// inputs: no timestamps or generator metadata, so identical calls produce
// identical bytes.
inline void line_chart(const std::filesystem::path& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("line_chart: no series");
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      throw std::invalid_argument("line_chart: series '" + s.label +
                                  "' has mismatched x/y lengths");
    }
    if (s.x.empty()) {
      throw std::invalid_argument("line_chart: series '" + s.label + "' is empty");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw std::invalid_argument("line_chart: series '" + s.label +
                                    "' holds a non-finite value");
      }
    }
  }

  detail::Range xr{series[0].x[0], series[0].x[0]};
  detail::Range yr{series[0].y[0], series[0].y[0]};
  for (const auto& s : series) {
    for (double v : s.x) xr.widen(v);
    for (double v : s.y) yr.widen(v);
  }
  xr.pad_if_degenerate();
  yr.pad_if_degenerate();

  constexpr double kWidth = 860.0, kHeight = 480.0;
  constexpr double kLeft = 72.0, kRight = 832.0, kTop = 44.0, kBottom = 430.0;
  static constexpr const char* kPalette[] = {"#1f6fb4", "#d62728", "#2ca04b",
                                             "#ff7f0e", "#9467bd", "#6b6b6b"};
  constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("line_chart: cannot open " + path.string() + " for writing");

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << detail::num(kWidth) << ' '
      << detail::num(kHeight) << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"" << detail::num(kWidth) << "\" height=\"" << detail::num(kHeight)
      << "\" fill=\"#ffffff\"/>\n";
  out << "<text x=\"" << detail::num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" "
         "font-size=\"16\">"
      << detail::escape(title) << "</text>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = static_cast<double>(i) / kTicks;
    const double gx = kLeft + fx * (kRight - kLeft);
    const double gy = kBottom - fx * (kBottom - kTop);
    out << "<line x1=\"" << detail::num(gx) << "\" y1=\"" << detail::num(kTop) << "\" x2=\""
        << detail::num(gx) << "\" y2=\"" << detail::num(kBottom)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << detail::num(kLeft) << "\" y1=\"" << detail::num(gy) << "\" x2=\""
        << detail::num(kRight) << "\" y2=\"" << detail::num(gy)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << detail::num(gx) << "\" y=\"" << detail::num(kBottom + 18)
        << "\" text-anchor=\"middle\" font-size=\"11\">"
        << detail::tick(xr.lo + fx * (xr.hi - xr.lo)) << "</text>\n";
    out << "<text x=\"" << detail::num(kLeft - 8) << "\" y=\"" << detail::num(gy + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << detail::tick(yr.lo + fx * (yr.hi - yr.lo))
        << "</text>\n";
  }

  out << "<line x1=\"" << detail::num(kLeft) << "\" y1=\"" << detail::num(kBottom) << "\" x2=\""
      << detail::num(kRight) << "\" y2=\"" << detail::num(kBottom)
      << "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
  out << "<line x1=\"" << detail::num(kLeft) << "\" y1=\"" << detail::num(kTop) << "\" x2=\""
      << detail::num(kLeft) << "\" y2=\"" << detail::num(kBottom)
      << "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
  out << "<text x=\"" << detail::num((kLeft + kRight) / 2) << "\" y=\""
      << detail::num(kHeight - 12) << "\" text-anchor=\"middle\" font-size=\"13\">"
      << detail::escape(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << detail::num((kTop + kBottom) / 2)
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << detail::num((kTop + kBottom) / 2) << ")\">" << detail::escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (i > 0) out << ' ';
      out << detail::num(xr.scale(series[s].x[i], kLeft, kRight)) << ','
          << detail::num(yr.scale(series[s].y[i], kBottom, kTop));
    }
    out << "\"/>\n";

    const double ly = kTop + 8.0 + 18.0 * static_cast<double>(s);
    out << "<line x1=\"" << detail::num(kRight - 150) << "\" y1=\"" << detail::num(ly)
        << "\" x2=\"" << detail::num(kRight - 122) << "\" y2=\"" << detail::num(ly)
        << "\" stroke=\"" << color << "\" stroke-width=\"1.8\"/>\n";
    out << "<text x=\"" << detail::num(kRight - 116) << "\" y=\"" << detail::num(ly + 4)
        << "\" font-size=\"12\">" << detail::escape(series[s].label) << "</text>\n";
  }

  out << "</svg>\n";
  if (!out) throw std::runtime_error("line_chart: write to " + path.string() + " failed");
}

}  // namespace lifefuse::svg
