#include "poisonbench/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace poisonbench {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string label_of(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

struct SeriesBuilder {
  std::vector<std::string> order;
  std::map<std::string, std::map<double, double>> points;

  void add(const std::string& name, double x, double y) {
    auto [it, inserted] = points.try_emplace(name);
    if (inserted) order.push_back(name);
    it->second.try_emplace(x, y);
  }

  std::vector<PlotSeries> finish() const {
    std::vector<PlotSeries> out;
    for (const auto& name : order) {
      PlotSeries s;
      s.name = name;
      for (const auto& [x, y] : points.at(name)) {
        s.x.push_back(x);
        s.y.push_back(y);
      }
      out.push_back(std::move(s));
    }
    return out;
  }
};

bool several_families(const Summary& summary) {
  return std::any_of(summary.begin(), summary.end(),
                     [&](const SummaryRow& r) { return r.family != summary.front().family; });
}

std::string attack_label(AttackKind k) {
  switch (k) {
    case AttackKind::kOpt: return "Opt";
    case AttackKind::kNopt: return "Nopt";
    case AttackKind::kNone: return "None";
  }
  return "?";
}

std::string defense_label(DefenseKind k) {
  switch (k) {
    case DefenseKind::kTrim: return "TRIM";
    case DefenseKind::kProda: return "Proda";
    case DefenseKind::kNone: return "None";
  }
  return "?";
}

}  // namespace

const char* to_string(PlotKind k) {
  switch (k) {
    case PlotKind::kMseVsAlpha: return "mse_vs_alpha";
    case PlotKind::kMseVsGamma: return "mse_vs_gamma";
    case PlotKind::kScatterFit: return "scatter_fit";
  }
  return "unknown";
}

PlotData mse_vs_alpha(const Summary& summary) {
  if (summary.empty()) throw std::invalid_argument("cannot plot an empty summary");
  const bool prefix = several_families(summary);

  // Defended series need a suffix only when several (alpha_assumed, gamma)
  // settings exist for them.
  std::map<std::string, std::set<std::pair<double, long>>> defended_settings;
  for (const auto& r : summary) {
    if (r.mse_defended) defended_settings[to_string(r.family)].insert({r.alpha_assumed, r.gamma});
  }

  SeriesBuilder b;
  for (const auto& r : summary) {
    const std::string head = prefix ? std::string(to_string(r.family)) + " " : std::string{};
    if (r.attack == AttackKind::kNone) continue;
    if (r.mse_clean) b.add(head + "Unpoison", r.alpha, r.mse_clean->mean);
    if (r.mse_poisoned) b.add(head + attack_label(r.attack), r.alpha, r.mse_poisoned->mean);
    if (r.mse_defended) {
      std::string name = head + attack_label(r.attack) + "+" + defense_label(r.defense);
      if (defended_settings[to_string(r.family)].size() > 1) {
        name += " (a'=" + label_of(r.alpha_assumed);
        if (r.defense == DefenseKind::kProda) name += ", g=" + std::to_string(r.gamma);
        name += ")";
      }
      b.add(name, r.alpha, r.mse_defended->mean);
    }
  }
  PlotData plot;
  plot.title = summary.front().dataset + ": MSE vs poisoning rate";
  plot.x_label = "poisoning rate alpha";
  plot.y_label = "MSE";
  plot.series = b.finish();
  return plot;
}

PlotData mse_vs_gamma(const Summary& summary) {
  if (summary.empty()) throw std::invalid_argument("cannot plot an empty summary");
  const bool prefix = several_families(summary);
  SeriesBuilder b;
  for (const auto& r : summary) {
    if (!r.mse_defended) continue;
    std::string name = prefix ? std::string(to_string(r.family)) + " " : std::string{};
    if (r.attack != AttackKind::kNone) name += attack_label(r.attack) + "+";
    name += defense_label(r.defense) + " alpha=" + label_of(r.alpha);
    b.add(name, static_cast<double>(r.gamma), r.mse_defended->mean);
  }
  PlotData plot;
  plot.title = summary.front().dataset + ": defended MSE vs group size";
  plot.x_label = "gamma";
  plot.y_label = "MSE";
  plot.series = b.finish();
  return plot;
}

PlotData scatter_fit(const Dataset& ds, const std::vector<std::pair<std::string, RegressionModel>>& models) {
  if (ds.empty() || ds.dims() < 1) throw std::invalid_argument("scatter plot needs at least one feature and one row");
  PlotData plot;
  plot.title = "fit";
  plot.x_label = ds.feature_names.empty() ? "x0" : ds.feature_names.front();
  plot.y_label = ds.response_name;

  PlotSeries points;
  points.name = "data";
  points.line = false;
  for (Index i = 0; i < ds.rows(); ++i) {
    points.x.push_back(ds.features(i, 0));
    points.y.push_back(ds.responses(i));
  }
  plot.series.push_back(std::move(points));

  const double lo = ds.features.col(0).minCoeff();
  const double hi = ds.features.col(0).maxCoeff();
  const Eigen::RowVectorXd mean = ds.features.colwise().mean();
  for (const auto& [name, model] : models) {
    PlotSeries line;
    line.name = name;
    for (double x : {lo, hi}) {
      Eigen::RowVectorXd row = mean;
      row(0) = x;
      line.x.push_back(x);
      line.y.push_back(model.predict_row(row));
    }
    plot.series.push_back(std::move(line));
  }
  return plot;
}

PlotData plot_data(const Summary& summary, PlotKind kind) {
  switch (kind) {
    case PlotKind::kMseVsAlpha: return mse_vs_alpha(summary);
    case PlotKind::kMseVsGamma: return mse_vs_gamma(summary);
    case PlotKind::kScatterFit: break;
  }
  throw std::invalid_argument("scatter_fit plots are built from a dataset, not a summary");
}

std::string render_svg(const PlotData& plot) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : plot.series) {
    for (double v : s.x) x_lo = std::min(x_lo, v), x_hi = std::max(x_hi, v);
    for (double v : s.y) y_lo = std::min(y_lo, v), y_hi = std::max(y_hi, v);
  }
  if (!std::isfinite(x_lo)) x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  if (y_lo > 0.0 && y_lo < 0.5 * y_hi) y_lo = 0.0;
  if (x_hi - x_lo <= 0.0) x_lo -= 0.5, x_hi += 0.5;
  if (y_hi - y_lo <= 0.0) y_lo -= 0.5, y_hi += 0.5;
  const double y_pad = 0.05 * (y_hi - y_lo);
  y_hi += y_pad;
  if (y_lo != 0.0) y_lo -= y_pad;

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y_lo) / (y_hi - y_lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text class=\"title\" x=\"" << fixed(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << xml_escape(plot.title) << "</text>\n";

  const double x0 = kLeft, x1 = kLeft + pw, y0 = kTop + ph, y1 = kTop;
  o << "<line class=\"axis\" x1=\"" << fixed(x0) << "\" y1=\"" << fixed(y0) << "\" x2=\"" << fixed(x1) << "\" y2=\""
    << fixed(y0) << "\" stroke=\"black\"/>\n";
  o << "<line class=\"axis\" x1=\"" << fixed(x0) << "\" y1=\"" << fixed(y0) << "\" x2=\"" << fixed(x0) << "\" y2=\""
    << fixed(y1) << "\" stroke=\"black\"/>\n";
  constexpr int kTicks = 5;
  for (int t = 0; t <= kTicks; ++t) {
    const double xv = x_lo + (x_hi - x_lo) * t / kTicks;
    const double yv = y_lo + (y_hi - y_lo) * t / kTicks;
    o << "<line class=\"tick\" x1=\"" << fixed(px(xv)) << "\" y1=\"" << fixed(y0) << "\" x2=\"" << fixed(px(xv))
      << "\" y2=\"" << fixed(y0 + 5) << "\" stroke=\"black\"/>\n";
    o << "<text class=\"tick-label\" x=\"" << fixed(px(xv)) << "\" y=\"" << fixed(y0 + 18)
      << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
    o << "<line class=\"tick\" x1=\"" << fixed(x0 - 5) << "\" y1=\"" << fixed(py(yv)) << "\" x2=\"" << fixed(x0)
      << "\" y2=\"" << fixed(py(yv)) << "\" stroke=\"black\"/>\n";
    o << "<text class=\"tick-label\" x=\"" << fixed(x0 - 8) << "\" y=\"" << fixed(py(yv) + 4)
      << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
  }
  o << "<text class=\"x-label\" x=\"" << fixed(kLeft + pw / 2) << "\" y=\"" << fixed(kHeight - 12)
    << "\" text-anchor=\"middle\">" << xml_escape(plot.x_label) << "</text>\n";
  o << "<text class=\"y-label\" x=\"16\" y=\"" << fixed(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fixed(kTop + ph / 2) << ")\">" << xml_escape(plot.y_label) << "</text>\n";

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (s.line) {
      o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << fixed(px(s.x[i])) << ',' << fixed(py(s.y[i]));
      o << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        o << "<circle class=\"point\" cx=\"" << fixed(px(s.x[i])) << "\" cy=\"" << fixed(py(s.y[i]))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    const double lx = kLeft + pw + 12;
    if (s.line) {
      o << "<line class=\"legend-swatch\" x1=\"" << fixed(lx) << "\" y1=\"" << fixed(ly) << "\" x2=\"" << fixed(lx + 18)
        << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    } else {
      o << "<circle class=\"legend-swatch\" cx=\"" << fixed(lx + 9) << "\" cy=\"" << fixed(ly) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    }
    o << "<text class=\"legend-entry\" x=\"" << fixed(lx + 24) << "\" y=\"" << fixed(ly + 4) << "\">"
      << xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_plot_csv(std::ostream& out, const PlotData& plot) {
  out << "series,x,y\n";
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) out << csv_quote(s.name) << ',' << shortest(s.x[i]) << ',' << shortest(s.y[i]) << '\n';
  }
}

PlotData read_plot_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "series,x,y") throw DataError("'" + path.string() + "' is not a plot CSV");
  PlotData plot;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string name;
    std::size_t pos = 0;
    if (line.front() == '"') {
      pos = 1;
      while (pos < line.size()) {
        if (line[pos] == '"') {
          if (pos + 1 < line.size() && line[pos + 1] == '"') {
            name += '"';
            pos += 2;
            continue;
          }
          ++pos;
          break;
        }
        name += line[pos++];
      }
    } else {
      pos = line.find(',');
      name = line.substr(0, pos);
    }
    if (pos >= line.size() || line[pos] != ',') throw DataError("malformed plot CSV line '" + line + "'");
    const auto comma = line.find(',', pos + 1);
    if (comma == std::string::npos) throw DataError("malformed plot CSV line '" + line + "'");
    double x = 0.0, y = 0.0;
    const auto rx = std::from_chars(line.data() + pos + 1, line.data() + comma, x);
    const auto ry = std::from_chars(line.data() + comma + 1, line.data() + line.size(), y);
    if (rx.ec != std::errc{} || ry.ec != std::errc{}) throw DataError("bad number in plot CSV line '" + line + "'");
    auto [it, inserted] = index.try_emplace(name, plot.series.size());
    if (inserted) plot.series.push_back({name, {}, {}, true});
    plot.series[it->second].x.push_back(x);
    plot.series[it->second].y.push_back(y);
  }
  return plot;
}

void emit_plot(const PlotData& plot, const std::filesystem::path& svg_path) {
  std::ofstream svg(svg_path, std::ios::binary);
  if (!svg) throw DataError("cannot write '" + svg_path.string() + "'");
  svg << render_svg(plot);
  auto csv_path = svg_path;
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw DataError("cannot write '" + csv_path.string() + "'");
  write_plot_csv(csv, plot);
}

void emit_plot(const Summary& summary, PlotKind kind, const std::filesystem::path& svg_path) {
  emit_plot(plot_data(summary, kind), svg_path);
}

}  // namespace poisonbench
