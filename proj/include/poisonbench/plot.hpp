#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "poisonbench/data.hpp"
#include "poisonbench/harness.hpp"
#include "poisonbench/regress.hpp"

namespace poisonbench {

enum class PlotKind { kMseVsAlpha, kMseVsGamma, kScatterFit };

const char* to_string(PlotKind k);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// Lines are drawn as one polyline; otherwise each point is a circle.
  bool line = true;
};

struct PlotData {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
};

/// Series "Unpoison", attack names and "<attack>+<defense>", one point per
/// alpha. Prefixed with the family when the summary holds several.
PlotData mse_vs_alpha(const Summary& summary);

/// Defended MSE against gamma, one series per (family, attack, defense, alpha).
PlotData mse_vs_gamma(const Summary& summary);

/// Rows as a scatter against the first feature, plus one line per model
/// evaluated with the other features held at their mean.
PlotData scatter_fit(const Dataset& ds, const std::vector<std::pair<std::string, RegressionModel>>& models);

PlotData plot_data(const Summary& summary, PlotKind kind);

/// Static SVG; nothing external is referenced.
std::string render_svg(const PlotData& plot);

/// Columns series,x,y; values in shortest round-trip form.
void write_plot_csv(std::ostream& out, const PlotData& plot);
PlotData read_plot_csv(const std::filesystem::path& path);

/// Writes `svg_path` and the same path with a .csv extension.
void emit_plot(const PlotData& plot, const std::filesystem::path& svg_path);
void emit_plot(const Summary& summary, PlotKind kind, const std::filesystem::path& svg_path);

}  // namespace poisonbench
