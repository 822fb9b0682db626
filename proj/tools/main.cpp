// SPDX-License-Identifier: Apache-2.0
//
// kaizen: run, summarise and plot continual self-supervised experiments.
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 data, 4 runtime, 5 run exists.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kaizen/errors.hpp"
#include "kaizen/eval_metrics.hpp"
#include "kaizen/experiment.hpp"
#include "kaizen/plotting.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kRuntime = 4, kExists = 5 };

kaizen::ExperimentConfig base_config(const std::string& preset, const std::string& config_path) {
  if (!config_path.empty()) return kaizen::load_config(config_path);
  return kaizen::preset(preset.empty() ? "desk2" : preset);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// --- run ------------------------------------------------------------------

struct RunArgs {
  std::string preset;
  std::string config;
  std::string strategies;
  std::vector<double> replay_fractions;
  std::vector<uint64_t> seeds;
  std::string output;
  bool force = false;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  kaizen::ExperimentConfig base = base_config(a.preset, a.config);
  if (!a.seeds.empty()) base.seeds = a.seeds;
  if (!a.output.empty()) base.output_dir = a.output;

  std::vector<kaizen::Strategy> strategies;
  for (const auto& s : split_list(a.strategies)) strategies.push_back(kaizen::strategy_from_string(s));
  if (strategies.empty()) strategies.push_back(base.training.strategy);
  std::vector<double> fractions = a.replay_fractions;
  if (fractions.empty()) fractions.push_back(base.replay_fraction);

  // Every variant shares base.partition_seed, hence one class split.
  std::vector<kaizen::ExperimentConfig> variants;
  for (auto s : strategies) {
    for (double f : fractions) {
      kaizen::ExperimentConfig c = base;
      c.training.strategy = s;
      c.replay_fraction = f;
      variants.push_back(c);
    }
  }
  for (const auto& c : variants) {
    const auto problems = kaizen::validate_config(c);
    if (!problems.empty()) {
      std::string msg = "invalid config:";
      for (const auto& p : problems) msg += "\n  - " + p;
      throw kaizen::ConfigError(msg);
    }
  }

  std::vector<kaizen::RunSummary> done;
  for (const auto& c : variants) {
    auto summary = kaizen::run_experiment(c, {a.force, a.quiet});
    std::cout << summary.directory.string() << '\n';
    done.push_back(std::move(summary));
  }
  std::cout << kaizen::summary_table(done);
  return kOk;
}

// --- metrics --------------------------------------------------------------

struct MetricsArgs {
  std::vector<std::string> inputs;
  std::string single;
  std::string out_dir;
  std::string ssl = "-";
  std::string method;
};

int cmd_metrics(const MetricsArgs& a) {
  if (!a.single.empty() && a.inputs.size() != 1) {
    std::cerr << "--single applies to exactly one matrix input\n";
    return kUsage;
  }
  std::vector<kaizen::TableRow> rows;
  for (const auto& in : a.inputs) {
    const std::string text = kaizen::read_text_file(in);
    const fs::path path(in);
    kaizen::TableRow row;
    row.ssl = a.ssl;
    row.method = a.method.empty() ? path.stem().string() : a.method;

    bool precomputed = false;
    json j;
    if (path.extension() == ".json") {
      try {
        j = json::parse(text);
      } catch (const json::exception& e) {
        throw kaizen::DataError(in + ": " + e.what());
      }
      precomputed = j.is_object() && !j.contains("accuracy");
    }
    if (precomputed) {
      const auto report = kaizen::metrics_from_json(text);
      if (j.contains("ssl") && j["ssl"].is_string()) row.ssl = j["ssl"].get<std::string>();
      if (j.contains("method") && j["method"].is_string()) row.method = j["method"].get<std::string>();
      row.fa = report.final_accuracy;
      row.ca = report.continual_accuracy;
      row.f = report.forgetting;
      row.ft = report.forward_transfer;
      rows.push_back(row);
      continue;
    }
    kaizen::AccuracyMatrix m = path.extension() == ".json" ? kaizen::AccuracyMatrix::from_json(text)
                                                           : kaizen::AccuracyMatrix::from_csv(text);
    if (!a.single.empty()) m.single_from_csv(kaizen::read_text_file(a.single));
    const auto report = kaizen::compute_metrics(m);
    row.fa = report.final_accuracy;
    row.ca = report.continual_accuracy;
    row.f = report.forgetting;
    row.ft = report.forward_transfer;
    rows.push_back(row);
    if (!a.out_dir.empty()) {
      fs::create_directories(a.out_dir);
      kaizen::write_text_file(fs::path(a.out_dir) / (path.stem().string() + ".metrics.json"),
                              kaizen::metrics_to_json(report) + "\n");
    }
  }
  const std::string table = kaizen::render_metrics_table(rows);
  std::cout << table;
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    kaizen::write_text_file(fs::path(a.out_dir) / "metrics_table.txt", table);
  }
  return kOk;
}

// --- plot -----------------------------------------------------------------

struct PlotArgs {
  std::string kind;
  std::vector<std::string> runs;
  std::vector<double> fractions{0.0, 0.01, 0.05, 0.10};
  std::string out_dir = ".";
};

// A run directory holds config.json; anything else is scanned one level deep.
std::vector<kaizen::RunSummary> collect_runs(const std::vector<std::string>& paths) {
  std::vector<kaizen::RunSummary> runs;
  for (const auto& p : paths) {
    if (!fs::is_directory(p)) throw kaizen::DataError(p + " is not a directory");
    if (fs::is_regular_file(fs::path(p) / "config.json")) {
      runs.push_back(kaizen::load_run(p));
      continue;
    }
    std::vector<fs::path> children;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_directory() && fs::is_regular_file(e.path() / "config.json")) children.push_back(e.path());
    }
    std::sort(children.begin(), children.end());
    if (children.empty()) throw kaizen::DataError(p + " contains no run directories");
    for (const auto& c : children) runs.push_back(kaizen::load_run(c));
  }
  return runs;
}

int cmd_plot(const PlotArgs& a) {
  const auto kind = kaizen::plot::plot_kind_from_string(a.kind);
  const auto runs = collect_runs(a.runs);
  const auto figures = kaizen::plot::make_figures(kind, runs, a.fractions);
  fs::create_directories(a.out_dir);
  for (const auto& f : figures) {
    const auto path = fs::path(a.out_dir) / f.file_name;
    kaizen::write_text_file(path, f.svg);
    std::cout << path.string() << '\n';
  }
  return kOk;
}

// --- validate-config / make-config ------------------------------------------

int cmd_validate(const std::string& path, const std::string& run_dir) {
  std::vector<std::string> problems;
  if (!run_dir.empty()) {
    problems = kaizen::validate_run_directory(run_dir);
  } else {
    problems = kaizen::validate_config(kaizen::load_config(path));
  }
  if (problems.empty()) {
    std::cout << "ok\n";
    return kOk;
  }
  for (const auto& p : problems) std::cerr << "  - " << p << '\n';
  return run_dir.empty() ? kConfig : kData;
}

int cmd_make_config(const std::string& preset, const std::string& out) {
  const std::string text = kaizen::config_to_json(kaizen::preset(preset)) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    kaizen::write_text_file(out, text);
    std::cout << out << " (hash " << kaizen::config_hash(kaizen::preset(preset)) << ")\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual self-supervised learning experiments"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run one or more experiments and persist their artifacts");
  auto* run_preset = run->add_option("--preset", run_args.preset, "Built-in config: full, desk2, desk5");
  run->add_option("--config", run_args.config, "JSON config file")->excludes(run_preset)->check(CLI::ExistingFile);
  run->add_option("--strategies", run_args.strategies, "Comma list of kaizen, cassle, no_distill");
  run->add_option("--replay-fractions", run_args.replay_fractions, "Replay fractions to sweep")->delimiter(',');
  run->add_option("--seeds", run_args.seeds, "Override the seed list")->delimiter(',');
  run->add_option("--output", run_args.output, "Override output_dir");
  run->add_flag("--force", run_args.force, "Overwrite an existing run with the same hash");
  run->add_flag("--quiet", run_args.quiet, "No progress output");

  MetricsArgs metrics_args;
  auto* metrics = app.add_subcommand("metrics", "Compute FA, CA, F and FT from accuracy matrices");
  metrics->add_option("inputs", metrics_args.inputs, "Matrix CSV/JSON files or precomputed metrics JSON")->required();
  metrics->add_option("--single", metrics_args.single, "Single-task accuracy CSV (enables FT)");
  metrics->add_option("--out", metrics_args.out_dir, "Directory for metric files and the text table");
  metrics->add_option("--ssl", metrics_args.ssl, "SSL column of the table");
  metrics->add_option("--method", metrics_args.method, "Method column of the table (default: file stem)");

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "Write SVG figures from finished runs");
  plot->add_option("--kind", plot_args.kind, "average, per_task, bar or replay")->required();
  plot->add_option("runs", plot_args.runs, "Run directories or output roots")->required();
  plot->add_option("--fractions", plot_args.fractions, "Replay fractions for the replay kind")->delimiter(',');
  plot->add_option("--out", plot_args.out_dir, "Output directory");

  std::string validate_path;
  std::string validate_run;
  auto* validate = app.add_subcommand("validate-config", "Check a config file, or a finished run directory");
  auto* vpath = validate->add_option("config", validate_path, "JSON config file");
  auto* vrun = validate->add_option("--run", validate_run, "Validate a run directory instead");
  vpath->excludes(vrun);
  validate->callback([&] {
    if (validate_path.empty() && validate_run.empty()) throw CLI::RequiredError("config or --run");
  });

  std::string make_preset = "full";
  std::string make_out;
  auto* make = app.add_subcommand("make-config", "Print a config with every field set");
  make->add_option("--preset", make_preset, "full, desk2 or desk5");
  make->add_option("--out", make_out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*metrics) return cmd_metrics(metrics_args);
    if (*plot) return cmd_plot(plot_args);
    if (*validate) return cmd_validate(validate_path, validate_run);
    if (*make) return cmd_make_config(make_preset, make_out);
  } catch (const kaizen::RunExistsError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExists;
  } catch (const kaizen::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const kaizen::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
