#include "f3ast/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "f3ast/csv.hpp"

namespace f3ast::harness {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 80;
constexpr double kRight = 190;
constexpr double kTop = 40;
constexpr double kBottom = 56;
constexpr int kTicks = 5;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

const char* const kMetrics[] = {"per_sample_accuracy", "per_sample_loss", "per_user_accuracy", "per_user_loss"};

std::string fmt(const char* pattern, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::pair<double, double> padded_range(double lo, double hi, double pad) {
  if (hi <= lo) return {lo - 0.5, hi + 0.5};
  const double span = hi - lo;
  return {lo - pad * span, hi + pad * span};
}

}  // namespace

std::string render_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (!std::isfinite(x_lo)) x_lo = x_hi = y_lo = y_hi = 0.0;
  std::tie(x_lo, x_hi) = padded_range(x_lo, x_hi, 0.0);
  std::tie(y_lo, y_hi) = padded_range(y_lo, y_hi, 0.05);

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - y_lo) / (y_hi - y_lo) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= kTicks; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / kTicks;
    const double fy = y_lo + (y_hi - y_lo) * i / kTicks;
    const std::string px = fmt("%.2f", sx(fx));
    const std::string py = fmt("%.2f", sy(fy));
    os << "<line x1=\"" << px << "\" y1=\"" << kTop + ph << "\" x2=\"" << px << "\" y2=\"" << kTop + ph + 5
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << fmt("%.4g", fx)
       << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py << "\" x2=\"" << kLeft << "\" y2=\"" << py
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << py << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
       << fmt("%.4g", fy) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 14 << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << kTop + ph / 2 << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < series[i].points.size(); ++j) {
      const auto& [x, y] = series[i].points[j];
      os << (j ? " " : "") << fmt("%.2f", sx(x)) << ',' << fmt("%.2f", sy(y));
    }
    os << "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    const double lx = kLeft + pw + 16;
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 24 << "\" y2=\"" << ly << "\" stroke=\""
       << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 30 << "\" y=\"" << ly << "\" dominant-baseline=\"middle\">" << escape(series[i].label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string series_label(const std::filesystem::path& csv) {
  static const std::regex pattern(R"((.+)_seed\d+)");
  const std::string stem = csv.stem().string();
  std::smatch m;
  if (std::regex_match(stem, m, pattern)) return m[1].str();
  return stem;
}

PlotOutcome emit_plots(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out_dir) {
  // label -> metric -> round -> (sum, count)
  std::map<std::string, std::map<std::string, std::map<double, std::pair<double, int>>>> acc;
  for (const auto& path : csvs) {
    const auto table = read_csv(path);
    const int round_col = table.column("round");
    if (round_col < 0) throw CsvParseError(path, 1, "missing 'round' column");
    auto& by_metric = acc[series_label(path)];
    for (const char* metric : kMetrics) {
      const int col = table.column(metric);
      if (col < 0) continue;
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto x = parse_cell(table, r, round_col, path);
        const auto y = parse_cell(table, r, col, path);
        if (!x) throw CsvParseError(path, table.line_numbers[r], "empty round number");
        if (!y) continue;
        auto& cell = by_metric[metric][*x];
        cell.first += *y;
        cell.second += 1;
      }
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  PlotOutcome outcome;
  for (const char* metric : kMetrics) {
    std::vector<Series> series;
    for (const auto& [label, by_metric] : acc) {
      const auto it = by_metric.find(metric);
      if (it == by_metric.end() || it->second.empty()) continue;
      Series s{label, {}};
      for (const auto& [x, cell] : it->second) s.points.emplace_back(x, cell.first / cell.second);
      series.push_back(std::move(s));
    }
    if (series.empty()) {
      outcome.notices.push_back(std::string("no data for ") + metric + "; plot omitted");
      continue;
    }
    const auto path = out_dir / (std::string(metric) + ".svg");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << render_svg(metric, "round", metric, series);
    if (!os) throw std::runtime_error("failed writing " + path.string());
    outcome.written.push_back(path);
  }
  return outcome;
}

}  // namespace f3ast::harness
