// SPDX-License-Identifier: Apache-2.0
#include "gesture/curves.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gesture/error.hpp"

namespace gesture::harness {

namespace {

void require_rows(const MetricsLog& log) {
  if (log.empty()) throw ContractViolation("curves: metrics log is empty");
}

double parse_real(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("bad number '" + std::string(s) + "'", line);
  return v;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Chart geometry.
constexpr double kWidth = 480, kHeight = 300, kLeft = 56, kRight = 16, kTop = 32, kBottom = 40;

std::string polyline(const MetricsLog& log, double (*pick)(const EpochMetrics&), double lo, double hi,
                     double y_offset, const char* colour, const char* series) {
  const double first = log.rows.front().epoch, last = log.rows.back().epoch;
  const double span_x = last > first ? last - first : 1.0;
  const double span_y = hi > lo ? hi - lo : 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  std::ostringstream pts;
  for (const auto& r : log.rows) {
    const double x = kLeft + (r.epoch - first) / span_x * pw;
    const double y = y_offset + kTop + ph - (pick(r) - lo) / span_y * ph;
    pts << fmt("%.2f", x) << ',' << fmt("%.2f", y) << ' ';
  }
  std::string p = pts.str();
  if (!p.empty()) p.pop_back();
  return "  <polyline class=\"" + std::string(series) + "\" fill=\"none\" stroke=\"" + colour +
         "\" stroke-width=\"2\" points=\"" + p + "\"/>\n";
}

std::string chart(const MetricsLog& log, const char* title, double (*train)(const EpochMetrics&),
                  double (*val)(const EpochMetrics&), double lo, double hi, double y_offset) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  std::ostringstream out;
  out << "  <text x=\"" << kLeft << "\" y=\"" << fmt("%.0f", y_offset + 20) << "\" font-size=\"14\">" << title
      << "</text>\n";
  out << "  <rect x=\"" << kLeft << "\" y=\"" << fmt("%.0f", y_offset + kTop) << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "  <text x=\"4\" y=\"" << fmt("%.0f", y_offset + kTop + 10) << "\" font-size=\"10\">" << fmt("%.3g", hi)
      << "</text>\n";
  out << "  <text x=\"4\" y=\"" << fmt("%.0f", y_offset + kTop + ph) << "\" font-size=\"10\">" << fmt("%.3g", lo)
      << "</text>\n";
  out << "  <text x=\"" << kLeft << "\" y=\"" << fmt("%.0f", y_offset + kHeight - 12)
      << "\" font-size=\"10\">epoch " << log.rows.front().epoch << "</text>\n";
  out << "  <text x=\"" << fmt("%.0f", kWidth - kRight - 50) << "\" y=\"" << fmt("%.0f", y_offset + kHeight - 12)
      << "\" font-size=\"10\">epoch " << log.rows.back().epoch << "</text>\n";
  out << polyline(log, train, lo, hi, y_offset, "#1f77b4", "train");
  out << polyline(log, val, lo, hi, y_offset, "#ff7f0e", "validation");
  return out.str();
}

}  // namespace

std::string curves_csv(const MetricsLog& log) {
  std::ostringstream out;
  out << kCurvesHeader << '\n';
  for (const auto& r : log.rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.train_loss, r.val_loss, r.train_accuracy,
                  r.val_accuracy);
    out << buf;
  }
  return out.str();
}

MetricsLog parse_curves_csv(std::string_view text) {
  MetricsLog log;
  std::size_t line_no = 0, pos = 0;
  bool header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header) {
      if (line != kCurvesHeader) throw ParseError("expected header '" + std::string(kCurvesHeader) + "'", line_no);
      header = true;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t s = 0;
    while (true) {
      const auto c = line.find(',', s);
      f.push_back(line.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
      if (c == std::string_view::npos) break;
      s = c + 1;
    }
    if (f.size() != 5) throw ParseError("expected 5 fields, got " + std::to_string(f.size()), line_no);
    EpochMetrics m;
    int epoch = 0;
    const auto [p, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), epoch);
    if (ec != std::errc() || p != f[0].data() + f[0].size()) throw ParseError("bad epoch", line_no);
    m.epoch = epoch;
    m.train_loss = parse_real(f[1], line_no);
    m.val_loss = parse_real(f[2], line_no);
    m.train_accuracy = parse_real(f[3], line_no);
    m.val_accuracy = parse_real(f[4], line_no);
    try {
      log.append(m);
    } catch (const ContractViolation& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!header) throw ParseError("missing header");
  return log;
}

std::string curves_svg(const MetricsLog& log) {
  require_rows(log);
  double hi_loss = 0.0;
  for (const auto& r : log.rows) hi_loss = std::max({hi_loss, r.train_loss, r.val_loss});
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << 2 * kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << 2 * kHeight << "\">\n";
  out << "<g id=\"loss\">\n"
      << chart(log, "Training vs validation loss", [](const EpochMetrics& r) { return r.train_loss; },
               [](const EpochMetrics& r) { return r.val_loss; }, 0.0, hi_loss, 0.0)
      << "</g>\n";
  out << "<g id=\"accuracy\">\n"
      << chart(log, "Training vs validation accuracy", [](const EpochMetrics& r) { return r.train_accuracy; },
               [](const EpochMetrics& r) { return r.val_accuracy; }, 0.0, 1.0, kHeight)
      << "</g>\n";
  out << "</svg>\n";
  return out.str();
}

void export_curves(const MetricsLog& log, const std::filesystem::path& path, CurveFormat format) {
  require_rows(log);
  const std::string body = format == CurveFormat::csv ? curves_csv(log) : curves_svg(log);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << body;
  if (!out) throw DataError("cannot write " + path.string());
}

MetricsLog read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_curves_csv(ss.str());
}

}  // namespace gesture::harness
