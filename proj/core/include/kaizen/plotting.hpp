// SPDX-License-Identifier: Apache-2.0
//
// Static SVG figures built from run summaries: average accuracy over seen
// tasks, per-task breakdown, metric bars and the replay ablation.

#pragma once

#include <string>
#include <vector>

#include "kaizen/experiment.hpp"

namespace kaizen::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> error;  // optional, same length as y
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  double y_min = 0.0;
  double y_max = 1.0;
};

// values[c][g]: category c (legend entry) within group g (x position).
struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> groups;
  std::vector<std::string> categories;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> errors;  // optional
};

std::string render_svg(const LineChart& chart);
std::string render_svg(const BarChart& chart);

enum class PlotKind { kAverage, kPerTask, kBar, kReplay };

PlotKind plot_kind_from_string(const std::string& name);
std::string to_string(PlotKind kind);

std::string run_label(const RunSummary& run);

// One curve per run: seed-mean of the average over seen tasks after each task.
LineChart average_chart(const std::vector<RunSummary>& runs);
// One chart per run with T series; series k starts at t = k.
std::vector<LineChart> per_task_charts(const std::vector<RunSummary>& runs);
// Groups FA, CA, F, FT; one bar per run.
BarChart metric_bar_chart(const std::vector<RunSummary>& runs);
// Groups CA, FA, F, FT; one bar series per replay fraction. Throws DataError
// listing every requested fraction without a matching run, or when two runs
// share a fraction.
BarChart replay_chart(const std::vector<RunSummary>& runs, const std::vector<double>& fractions);

struct Figure {
  std::string file_name;
  std::string svg;
};

std::vector<Figure> make_figures(PlotKind kind, const std::vector<RunSummary>& runs,
                                 const std::vector<double>& replay_fractions = {0.0, 0.01, 0.05, 0.10});

}  // namespace kaizen::plot
