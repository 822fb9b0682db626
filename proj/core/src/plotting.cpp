// SPDX-License-Identifier: Apache-2.0

#include "kaizen/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kaizen/errors.hpp"

namespace kaizen::plot {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 64;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 56;

const char* colour(size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

void header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(title) << "</text>\n";
}

struct Frame {
  double x0, x1, y0, y1;  // data range
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void y_axis(std::ostringstream& os, const Frame& f, const std::string& label) {
  const double step = (f.y1 - f.y0) / 5.0;
  for (int i = 0; i <= 5; ++i) {
    const double v = f.y0 + step * i;
    os << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kWidth - kRight) << "\" y1=\"" << num(f.py(v)) << "\" y2=\""
       << num(f.py(v)) << "\" stroke=\"#e0e0e0\"/>\n"
       << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(f.py(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
       << "</text>\n";
  }
  os << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" y2=\""
     << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kWidth - kRight) << "\" y1=\"" << num(kHeight - kBottom)
     << "\" y2=\"" << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n"
     << "<text transform=\"translate(16 " << num((kTop + kHeight - kBottom) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(label) << "</text>\n";
}

void legend(std::ostringstream& os, const std::vector<std::string>& labels) {
  for (size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    os << "<rect x=\"" << num(kWidth - kRight + 14) << "\" y=\"" << num(y - 9) << "\" width=\"12\" height=\"12\" fill=\""
       << colour(i) << "\"/>\n"
       << "<text x=\"" << num(kWidth - kRight + 32) << "\" y=\"" << num(y + 1) << "\">" << escape(labels[i]) << "</text>\n";
  }
}

std::pair<double, double> y_range(double lo, double hi) {
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

}  // namespace

std::string render_svg(const LineChart& chart) {
  double x0 = 1e300;
  double x1 = -1e300;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "': x and y lengths differ");
    for (double x : s.x) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  }
  if (x0 > x1) {
    x0 = 0;
    x1 = 1;
  }
  if (x0 == x1) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  double y_lo = chart.y_min;
  double y_hi = chart.y_max;
  for (const auto& s : chart.series)
    for (size_t i = 0; i < s.y.size(); ++i) {
      const double e = i < s.error.size() ? s.error[i] : 0.0;
      y_lo = std::min(y_lo, s.y[i] - e);
      y_hi = std::max(y_hi, s.y[i] + e);
    }
  std::tie(y_lo, y_hi) = y_range(y_lo, y_hi);
  const Frame f{x0, x1, y_lo, y_hi};
  std::ostringstream os;
  header(os, chart.title);
  y_axis(os, f, chart.y_label);
  std::vector<double> xs;
  for (const auto& s : chart.series) xs.insert(xs.end(), s.x.begin(), s.x.end());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    os << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(kHeight - kBottom + 16) << "\" text-anchor=\"middle\">"
       << tick_label(x) << "</text>\n";
  }
  os << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"" << num(kHeight - 14)
     << "\" text-anchor=\"middle\">" << escape(chart.x_label) << "</text>\n";
  std::vector<std::string> labels;
  for (size_t si = 0; si < chart.series.size(); ++si) {
    const auto& s = chart.series[si];
    labels.push_back(s.label);
    os << "<g class=\"series\" data-label=\"" << escape(s.label) << "\" data-points=\"" << s.y.size() << "\">\n";
    if (s.y.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << colour(si) << "\" stroke-width=\"2\" points=\"";
      for (size_t i = 0; i < s.y.size(); ++i) os << (i ? " " : "") << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i]));
      os << "\"/>\n";
    }
    for (size_t i = 0; i < s.y.size(); ++i) {
      if (i < s.error.size() && s.error[i] > 0.0) {
        os << "<line x1=\"" << num(f.px(s.x[i])) << "\" x2=\"" << num(f.px(s.x[i])) << "\" y1=\""
           << num(f.py(s.y[i] - s.error[i])) << "\" y2=\"" << num(f.py(s.y[i] + s.error[i])) << "\" stroke=\""
           << colour(si) << "\"/>\n";
      }
      os << "<circle cx=\"" << num(f.px(s.x[i])) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"3.5\" fill=\""
         << colour(si) << "\"/>\n";
    }
    os << "</g>\n";
  }
  legend(os, labels);
  os << "</svg>\n";
  return os.str();
}

std::string render_svg(const BarChart& chart) {
  const size_t groups = chart.groups.size();
  const size_t cats = chart.categories.size();
  if (chart.values.size() != cats) throw std::invalid_argument("bar chart: one value row per category required");
  for (const auto& row : chart.values) {
    if (row.size() != groups) throw std::invalid_argument("bar chart: one value per group required");
  }
  double y_lo = 0.0;
  double y_hi = 1.0;
  for (size_t c = 0; c < cats; ++c)
    for (size_t g = 0; g < groups; ++g) {
      const double e = c < chart.errors.size() && g < chart.errors[c].size() ? chart.errors[c][g] : 0.0;
      y_lo = std::min(y_lo, chart.values[c][g] - e);
      y_hi = std::max(y_hi, chart.values[c][g] + e);
    }
  std::tie(y_lo, y_hi) = y_range(y_lo, y_hi);
  const Frame f{0.0, static_cast<double>(std::max<size_t>(groups, 1)), y_lo, y_hi};
  std::ostringstream os;
  header(os, chart.title);
  y_axis(os, f, chart.y_label);
  const double slot = f.px(1.0) - f.px(0.0);
  const double bar = slot * 0.8 / static_cast<double>(std::max<size_t>(cats, 1));
  for (size_t g = 0; g < groups; ++g) {
    os << "<text x=\"" << num(f.px(g + 0.5)) << "\" y=\"" << num(kHeight - kBottom + 16) << "\" text-anchor=\"middle\">"
       << escape(chart.groups[g]) << "</text>\n";
  }
  for (size_t c = 0; c < cats; ++c) {
    os << "<g class=\"series\" data-label=\"" << escape(chart.categories[c]) << "\" data-points=\"" << groups << "\">\n";
    for (size_t g = 0; g < groups; ++g) {
      const double v = chart.values[c][g];
      const double x = f.px(static_cast<double>(g)) + slot * 0.1 + bar * static_cast<double>(c);
      const double top = f.py(std::max(v, 0.0));
      const double bottom = f.py(std::min(v, 0.0));
      os << "<rect x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(bar * 0.92) << "\" height=\""
         << num(bottom - top) << "\" fill=\"" << colour(c) << "\"><title>" << escape(chart.categories[c]) << ' '
         << escape(chart.groups[g]) << ": " << tick_label(v) << "</title></rect>\n";
      const double e = c < chart.errors.size() && g < chart.errors[c].size() ? chart.errors[c][g] : 0.0;
      if (e > 0.0) {
        const double cx = x + bar * 0.46;
        os << "<line x1=\"" << num(cx) << "\" x2=\"" << num(cx) << "\" y1=\"" << num(f.py(v - e)) << "\" y2=\""
           << num(f.py(v + e)) << "\" stroke=\"black\"/>\n";
      }
    }
    os << "</g>\n";
  }
  if (y_lo < 0.0) {
    os << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kWidth - kRight) << "\" y1=\"" << num(f.py(0)) << "\" y2=\""
       << num(f.py(0)) << "\" stroke=\"black\"/>\n";
  }
  legend(os, chart.categories);
  os << "</svg>\n";
  return os.str();
}

PlotKind plot_kind_from_string(const std::string& name) {
  if (name == "average") return PlotKind::kAverage;
  if (name == "per_task") return PlotKind::kPerTask;
  if (name == "bar") return PlotKind::kBar;
  if (name == "replay") return PlotKind::kReplay;
  throw ConfigError("unknown plot kind '" + name + "' (expected average, per_task, bar or replay)");
}

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::kAverage: return "average";
    case PlotKind::kPerTask: return "per_task";
    case PlotKind::kBar: return "bar";
    case PlotKind::kReplay: return "replay";
  }
  return "?";
}

std::string run_label(const RunSummary& run) {
  return to_string(run.config.training.strategy) + " / " + ssl::to_string(run.config.ssl_kind);
}

namespace {

void require_runs(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw DataError("no runs to plot");
  for (const auto& r : runs) {
    if (r.seeds.empty()) throw DataError("run " + r.hash + " has no completed seeds");
  }
}

MetricSummary metric_of(const RunSummary& r, const std::string& key) {
  auto it = r.metrics.find(key);
  return it == r.metrics.end() ? MetricSummary{} : it->second;
}

}  // namespace

LineChart average_chart(const std::vector<RunSummary>& runs) {
  require_runs(runs);
  LineChart chart;
  chart.title = "Average accuracy over seen tasks";
  chart.x_label = "after task";
  chart.y_label = "accuracy";
  for (const auto& r : runs) {
    Series s;
    s.label = run_label(r);
    const auto t_count = static_cast<size_t>(r.config.num_tasks);
    for (size_t t = 0; t < t_count; ++t) {
      std::vector<double> v;
      for (const auto& seed : r.seeds) v.push_back(seed.metrics.average_seen.at(t));
      const auto m = summarize(v);
      s.x.push_back(static_cast<double>(t + 1));
      s.y.push_back(m.mean);
      s.error.push_back(m.stddev);
    }
    chart.series.push_back(std::move(s));
  }
  return chart;
}

std::vector<LineChart> per_task_charts(const std::vector<RunSummary>& runs) {
  require_runs(runs);
  std::vector<LineChart> out;
  for (const auto& r : runs) {
    LineChart chart;
    chart.title = "Per-task accuracy: " + run_label(r);
    chart.x_label = "after task";
    chart.y_label = "accuracy";
    const int64_t t_count = r.config.num_tasks;
    for (int64_t k = 1; k <= t_count; ++k) {
      Series s;
      s.label = "task " + std::to_string(k);
      for (int64_t t = k; t <= t_count; ++t) {
        std::vector<double> v;
        for (const auto& seed : r.seeds) v.push_back(seed.matrix.at(t, k));
        const auto m = summarize(v);
        s.x.push_back(static_cast<double>(t));
        s.y.push_back(m.mean);
        s.error.push_back(m.stddev);
      }
      chart.series.push_back(std::move(s));
    }
    out.push_back(std::move(chart));
  }
  return out;
}

BarChart metric_bar_chart(const std::vector<RunSummary>& runs) {
  require_runs(runs);
  BarChart chart;
  chart.title = "Continual-learning metrics";
  chart.y_label = "value";
  chart.groups = {"FA", "CA", "F", "FT"};
  for (const auto& r : runs) {
    chart.categories.push_back(run_label(r));
    std::vector<double> v;
    std::vector<double> e;
    for (const auto& g : chart.groups) {
      const auto m = metric_of(r, g);
      v.push_back(m.mean);
      e.push_back(m.stddev);
    }
    chart.values.push_back(v);
    chart.errors.push_back(e);
  }
  return chart;
}

BarChart replay_chart(const std::vector<RunSummary>& runs, const std::vector<double>& fractions) {
  require_runs(runs);
  if (fractions.empty()) throw DataError("replay plot needs at least one replay fraction");
  BarChart chart;
  chart.title = "Replay ablation";
  chart.y_label = "value";
  chart.groups = {"CA", "FA", "F", "FT"};
  std::vector<std::string> missing;
  for (double frac : fractions) {
    const RunSummary* match = nullptr;
    char label[32];
    std::snprintf(label, sizeof(label), "replay %g%%", frac * 100.0);
    for (const auto& r : runs) {
      if (std::abs(r.config.replay_fraction - frac) >= 1e-9) continue;
      if (match) {
        throw DataError(std::string("replay plot: more than one run at ") + label + " (" + match->hash + ", " + r.hash +
                        "); pass one strategy and SSL kind at a time");
      }
      match = &r;
    }
    if (!match) {
      missing.push_back(label);
      continue;
    }
    chart.categories.push_back(label);
    std::vector<double> v;
    std::vector<double> e;
    for (const auto& g : chart.groups) {
      const auto m = metric_of(*match, g);
      v.push_back(m.mean);
      e.push_back(m.stddev);
    }
    chart.values.push_back(v);
    chart.errors.push_back(e);
  }
  if (!missing.empty()) {
    std::string msg = "replay plot is missing runs for:";
    for (const auto& m : missing) msg += "\n  - " + m;
    throw DataError(msg);
  }
  return chart;
}

std::vector<Figure> make_figures(PlotKind kind, const std::vector<RunSummary>& runs,
                                 const std::vector<double>& replay_fractions) {
  std::vector<Figure> out;
  switch (kind) {
    case PlotKind::kAverage:
      out.push_back({"average.svg", render_svg(average_chart(runs))});
      break;
    case PlotKind::kPerTask: {
      const auto charts = per_task_charts(runs);
      for (size_t i = 0; i < charts.size(); ++i) {
        out.push_back({"per_task_" + runs[i].hash + ".svg", render_svg(charts[i])});
      }
      break;
    }
    case PlotKind::kBar:
      out.push_back({"metrics_bar.svg", render_svg(metric_bar_chart(runs))});
      break;
    case PlotKind::kReplay:
      out.push_back({"replay_ablation.svg", render_svg(replay_chart(runs, replay_fractions))});
      break;
  }
  return out;
}

}  // namespace kaizen::plot
