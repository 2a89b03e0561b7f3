#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace f3ast::harness {

/// Ordered (x, y) points of one legend entry.
struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Deterministic line chart: fixed canvas, 5 ticks per axis, one polyline
/// and legend entry per series.
std::string render_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

/// Legend label of a round CSV: "<policy>" for "<policy>_seed<k>.csv",
/// otherwise the file stem.
std::string series_label(const std::filesystem::path& csv);

struct PlotOutcome {
  std::vector<std::filesystem::path> written;
  /// One line per metric that had no data and was skipped.
  std::vector<std::string> notices;
};

/// One SVG per metric column (`<metric>.svg` in out_dir); each legend entry
/// is the per-round mean over the CSVs sharing a label.
PlotOutcome emit_plots(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out_dir);

}  // namespace f3ast::harness
