// SPDX-License-Identifier: Apache-2.0

#include "kaizen/eval_metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kaizen/errors.hpp"

namespace kaizen {

AccuracyMatrix::AccuracyMatrix(int64_t num_tasks)
    : num_tasks_(num_tasks),
      cells_(static_cast<size_t>(num_tasks * num_tasks)),
      single_(static_cast<size_t>(num_tasks)) {
  if (num_tasks < 1) throw std::invalid_argument("AccuracyMatrix: num_tasks must be >= 1");
}

void AccuracyMatrix::check_cell(int64_t after_task, int64_t task) const {
  if (after_task < 1 || after_task > num_tasks_ || task < 1 || task > after_task) {
    throw std::out_of_range("AccuracyMatrix: cell (" + std::to_string(after_task) + ", " + std::to_string(task) +
                            ") outside the lower triangle of a " + std::to_string(num_tasks_) + "-task matrix");
  }
}

void AccuracyMatrix::set(int64_t after_task, int64_t task, double accuracy) {
  check_cell(after_task, task);
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("accuracy must lie in [0, 1]");
  cells_[static_cast<size_t>((after_task - 1) * num_tasks_ + task - 1)] = accuracy;
}

bool AccuracyMatrix::has(int64_t after_task, int64_t task) const {
  check_cell(after_task, task);
  return cells_[static_cast<size_t>((after_task - 1) * num_tasks_ + task - 1)].has_value();
}

double AccuracyMatrix::at(int64_t after_task, int64_t task) const {
  check_cell(after_task, task);
  const auto& c = cells_[static_cast<size_t>((after_task - 1) * num_tasks_ + task - 1)];
  if (!c) {
    throw std::out_of_range("AccuracyMatrix: cell (" + std::to_string(after_task) + ", " + std::to_string(task) +
                            ") is empty");
  }
  return *c;
}

void AccuracyMatrix::set_single(int64_t task, double accuracy) {
  if (task < 1 || task > num_tasks_) throw std::out_of_range("AccuracyMatrix: single-task index out of range");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("accuracy must lie in [0, 1]");
  single_[static_cast<size_t>(task - 1)] = accuracy;
}

bool AccuracyMatrix::has_single() const {
  return num_tasks_ > 0 && std::all_of(single_.begin(), single_.end(), [](const auto& v) { return v.has_value(); });
}

double AccuracyMatrix::single(int64_t task) const {
  if (task < 1 || task > num_tasks_ || !single_[static_cast<size_t>(task - 1)]) {
    throw std::out_of_range("AccuracyMatrix: no single-task accuracy for task " + std::to_string(task));
  }
  return *single_[static_cast<size_t>(task - 1)];
}

int64_t AccuracyMatrix::populated() const {
  return std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); });
}

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": '" + s + "' is not a number");
  }
}

}  // namespace

std::string AccuracyMatrix::to_csv() const {
  std::ostringstream os;
  os << "after_task";
  for (int64_t k = 1; k <= num_tasks_; ++k) os << ",task_" << k;
  os << '\n';
  for (int64_t t = 1; t <= num_tasks_; ++t) {
    os << t;
    for (int64_t k = 1; k <= num_tasks_; ++k) {
      os << ',';
      if (k <= t && has(t, k)) os << format_value(at(t, k));
    }
    os << '\n';
  }
  return os.str();
}

AccuracyMatrix AccuracyMatrix::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw DataError("accuracy CSV: empty input");
  const auto header = split(trim(line), ',');
  if (header.empty() || trim(header[0]) != "after_task") throw DataError("accuracy CSV: header must start with after_task");
  const auto t_count = static_cast<int64_t>(header.size()) - 1;
  if (t_count < 1) throw DataError("accuracy CSV: no task columns");
  for (int64_t k = 1; k <= t_count; ++k) {
    if (trim(header[static_cast<size_t>(k)]) != "task_" + std::to_string(k)) {
      throw DataError("accuracy CSV: column " + std::to_string(k + 1) + " must be task_" + std::to_string(k));
    }
  }
  AccuracyMatrix m(t_count);
  int64_t row = 0;
  std::vector<std::string> problems;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    ++row;
    const auto fields = split(line, ',');
    const std::string where = "accuracy CSV row " + std::to_string(row);
    if (static_cast<int64_t>(fields.size()) != t_count + 1) {
      problems.push_back(where + ": expected " + std::to_string(t_count + 1) + " fields");
      continue;
    }
    int64_t t = 0;
    try {
      t = static_cast<int64_t>(parse_double(trim(fields[0]), where));
    } catch (const DataError& e) {
      problems.push_back(e.what());
      continue;
    }
    if (t != row) {
      problems.push_back(where + ": after_task must be " + std::to_string(row));
      continue;
    }
    for (int64_t k = 1; k <= t_count; ++k) {
      const std::string cell = trim(fields[static_cast<size_t>(k)]);
      if (k > t) {
        if (!cell.empty()) problems.push_back(where + ": task_" + std::to_string(k) + " must be empty (unseen task)");
        continue;
      }
      if (cell.empty()) {
        problems.push_back(where + ": task_" + std::to_string(k) + " is missing");
        continue;
      }
      try {
        const double v = parse_double(cell, where);
        if (!(v >= 0.0 && v <= 1.0)) {
          problems.push_back(where + ": task_" + std::to_string(k) + " = " + cell + " outside [0, 1]");
          continue;
        }
        m.set(t, k, v);
      } catch (const DataError& e) {
        problems.push_back(e.what());
      }
    }
  }
  if (row != t_count) problems.push_back("accuracy CSV: expected " + std::to_string(t_count) + " rows, found " + std::to_string(row));
  if (!problems.empty()) {
    std::string msg = "accuracy CSV has " + std::to_string(problems.size()) + " problem(s):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw DataError(msg);
  }
  return m;
}

std::string AccuracyMatrix::single_to_csv() const {
  std::ostringstream os;
  os << "task,single_task_accuracy\n";
  for (int64_t k = 1; k <= num_tasks_; ++k) {
    os << k << ',';
    if (single_[static_cast<size_t>(k - 1)]) os << format_value(*single_[static_cast<size_t>(k - 1)]);
    os << '\n';
  }
  return os.str();
}

void AccuracyMatrix::single_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || trim(line) != "task,single_task_accuracy") {
    throw DataError("single-task CSV: header must be task,single_task_accuracy");
  }
  int64_t seen = 0;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2) throw DataError("single-task CSV: expected 2 fields in '" + line + "'");
    const auto k = static_cast<int64_t>(parse_double(trim(fields[0]), "single-task CSV"));
    const double v = parse_double(trim(fields[1]), "single-task CSV");
    if (k < 1 || k > num_tasks_) throw DataError("single-task CSV: task " + std::to_string(k) + " out of range");
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("single-task CSV: accuracy outside [0, 1]");
    set_single(k, v);
    ++seen;
  }
  if (seen != num_tasks_) throw DataError("single-task CSV: expected " + std::to_string(num_tasks_) + " rows");
}

std::string AccuracyMatrix::to_json() const {
  nlohmann::json j;
  j["num_tasks"] = num_tasks_;
  nlohmann::json rows = nlohmann::json::array();
  for (int64_t t = 1; t <= num_tasks_; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int64_t k = 1; k <= t; ++k) row.push_back(has(t, k) ? nlohmann::json(at(t, k)) : nlohmann::json());
    rows.push_back(row);
  }
  j["accuracy"] = rows;
  if (has_single()) {
    std::vector<double> s;
    for (int64_t k = 1; k <= num_tasks_; ++k) s.push_back(single(k));
    j["single_task"] = s;
  } else {
    j["single_task"] = nullptr;
  }
  return j.dump(2);
}

AccuracyMatrix AccuracyMatrix::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("accuracy JSON: ") + e.what());
  }
  std::vector<std::string> problems;
  if (!j.contains("num_tasks") || !j["num_tasks"].is_number_integer()) throw DataError("accuracy JSON: num_tasks missing");
  const auto t_count = j["num_tasks"].get<int64_t>();
  if (t_count < 1) throw DataError("accuracy JSON: num_tasks must be >= 1");
  AccuracyMatrix m(t_count);
  if (!j.contains("accuracy") || !j["accuracy"].is_array() || static_cast<int64_t>(j["accuracy"].size()) != t_count) {
    throw DataError("accuracy JSON: 'accuracy' must hold " + std::to_string(t_count) + " rows");
  }
  for (int64_t t = 1; t <= t_count; ++t) {
    const auto& row = j["accuracy"][static_cast<size_t>(t - 1)];
    if (!row.is_array() || static_cast<int64_t>(row.size()) != t) {
      problems.push_back("row " + std::to_string(t) + " must hold " + std::to_string(t) + " values");
      continue;
    }
    for (int64_t k = 1; k <= t; ++k) {
      const auto& v = row[static_cast<size_t>(k - 1)];
      if (v.is_null()) continue;
      if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) {
        problems.push_back("A(" + std::to_string(t) + "," + std::to_string(k) + ") must be a number in [0, 1]");
        continue;
      }
      m.set(t, k, v.get<double>());
    }
  }
  if (j.contains("single_task") && !j["single_task"].is_null()) {
    const auto& s = j["single_task"];
    if (!s.is_array() || static_cast<int64_t>(s.size()) != t_count) {
      problems.push_back("single_task must hold " + std::to_string(t_count) + " values");
    } else {
      for (int64_t k = 1; k <= t_count; ++k) {
        const auto& v = s[static_cast<size_t>(k - 1)];
        if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) {
          problems.push_back("single_task[" + std::to_string(k) + "] must be a number in [0, 1]");
        } else {
          m.set_single(k, v.get<double>());
        }
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "accuracy JSON has " + std::to_string(problems.size()) + " problem(s):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw DataError(msg);
  }
  return m;
}

namespace {

void require_complete(const AccuracyMatrix& m, const char* metric) {
  if (m.num_tasks() < 1 || !m.complete()) {
    throw std::invalid_argument(std::string(metric) + ": accuracy matrix is incomplete (" + std::to_string(m.populated()) +
                                " of " + std::to_string(m.num_tasks() * (m.num_tasks() + 1) / 2) + " cells)");
  }
}

}  // namespace

double final_accuracy(const AccuracyMatrix& m) {
  require_complete(m, "final_accuracy");
  const int64_t t_count = m.num_tasks();
  double s = 0.0;
  for (int64_t i = 1; i <= t_count; ++i) s += m.at(t_count, i);
  return s / static_cast<double>(t_count);
}

double continual_accuracy(const AccuracyMatrix& m) {
  require_complete(m, "continual_accuracy");
  const int64_t t_count = m.num_tasks();
  double s = 0.0;
  for (int64_t i = 1; i <= t_count; ++i) {
    double row = 0.0;
    for (int64_t j = 1; j <= i; ++j) row += m.at(i, j);
    s += row / static_cast<double>(i);
  }
  return s / static_cast<double>(t_count);
}

double forgetting(const AccuracyMatrix& m) {
  require_complete(m, "forgetting");
  const int64_t t_count = m.num_tasks();
  if (t_count < 2) throw std::invalid_argument("forgetting: undefined for a single task");
  double s = 0.0;
  for (int64_t i = 1; i < t_count; ++i) {
    double best = m.at(i, i);
    for (int64_t t = i + 1; t <= t_count; ++t) best = std::max(best, m.at(t, i));
    s += best - m.at(t_count, i);
  }
  return s / static_cast<double>(t_count - 1);
}

double forward_transfer(const AccuracyMatrix& m) {
  require_complete(m, "forward_transfer");
  if (!m.has_single()) throw std::invalid_argument("forward_transfer: single-task accuracies are missing");
  const int64_t t_count = m.num_tasks();
  if (t_count < 2) throw std::invalid_argument("forward_transfer: undefined for a single task");
  double s = 0.0;
  for (int64_t i = 2; i <= t_count; ++i) s += m.at(i, i) - m.single(i);
  return s / static_cast<double>(t_count - 1);
}

MetricsReport compute_metrics(const AccuracyMatrix& m) {
  MetricsReport r;
  r.num_tasks = m.num_tasks();
  r.final_accuracy = final_accuracy(m);
  r.continual_accuracy = continual_accuracy(m);
  if (m.num_tasks() >= 2) {
    r.forgetting = forgetting(m);
    if (m.has_single()) r.forward_transfer = forward_transfer(m);
  }
  for (int64_t k = 1; k <= m.num_tasks(); ++k) {
    for (int64_t t = k; t <= m.num_tasks(); ++t) r.per_task_curves[k].push_back(m.at(t, k));
  }
  for (int64_t t = 1; t <= m.num_tasks(); ++t) {
    double s = 0.0;
    for (int64_t k = 1; k <= t; ++k) s += m.at(t, k);
    r.average_seen.push_back(s / static_cast<double>(t));
  }
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["num_tasks"] = r.num_tasks;
  j["FA"] = r.final_accuracy;
  j["CA"] = r.continual_accuracy;
  j["F"] = r.forgetting ? nlohmann::json(*r.forgetting) : nlohmann::json();
  j["FT"] = r.forward_transfer ? nlohmann::json(*r.forward_transfer) : nlohmann::json();
  nlohmann::json curves = nlohmann::json::object();
  for (const auto& [k, v] : r.per_task_curves) curves[std::to_string(k)] = v;
  j["per_task_curves"] = curves;
  j["average_seen"] = r.average_seen;
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics JSON: ") + e.what());
  }
  std::vector<std::string> problems;
  auto number = [&](const char* key, bool required) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) {
      if (required) problems.push_back(std::string("'") + key + "' is required");
      return std::nullopt;
    }
    if (!j[key].is_number()) {
      problems.push_back(std::string("'") + key + "' must be a number");
      return std::nullopt;
    }
    return j[key].get<double>();
  };
  MetricsReport r;
  r.final_accuracy = number("FA", true).value_or(0.0);
  r.continual_accuracy = number("CA", true).value_or(0.0);
  r.forgetting = number("F", false);
  r.forward_transfer = number("FT", false);
  r.num_tasks = j.value("num_tasks", int64_t{0});
  if (j.contains("per_task_curves") && j["per_task_curves"].is_object()) {
    for (const auto& [k, v] : j["per_task_curves"].items()) r.per_task_curves[std::stoll(k)] = v.get<std::vector<double>>();
  }
  if (j.contains("average_seen") && j["average_seen"].is_array()) r.average_seen = j["average_seen"].get<std::vector<double>>();
  if (!problems.empty()) {
    std::string msg = "metrics JSON has " + std::to_string(problems.size()) + " problem(s):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw DataError(msg);
  }
  return r;
}

std::string render_metrics_table(std::span<const TableRow> rows) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return std::string(buf);
  };
  size_t ssl_w = 3;
  size_t method_w = 6;
  for (const auto& r : rows) {
    ssl_w = std::max(ssl_w, r.ssl.size());
    method_w = std::max(method_w, r.method.size());
  }
  std::ostringstream os;
  auto line = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d,
                  const std::string& e, const std::string& f) {
    os << std::left << std::setw(static_cast<int>(ssl_w)) << a << "  " << std::setw(static_cast<int>(method_w)) << b
       << std::right << "  " << std::setw(7) << c << "  " << std::setw(7) << d << "  " << std::setw(7) << e << "  "
       << std::setw(7) << f << '\n';
  };
  line("SSL", "Method", "FA", "CA", "F", "FT");
  os << std::string(ssl_w + method_w + 4 + 4 * 9, '-') << '\n';
  for (const auto& r : rows) line(r.ssl, r.method, cell(r.fa), cell(r.ca), cell(r.f), cell(r.ft));
  return os.str();
}

double macro_accuracy(std::span<const int32_t> predictions, std::span<const int32_t> labels,
                      std::span<const int32_t> classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("macro_accuracy: size mismatch");
  std::map<int32_t, std::pair<int64_t, int64_t>> per_class;  // correct, total
  for (int32_t c : classes) per_class[c] = {0, 0};
  for (size_t i = 0; i < labels.size(); ++i) {
    auto it = per_class.find(labels[i]);
    if (it == per_class.end()) throw std::invalid_argument("macro_accuracy: label outside the task's classes");
    ++it->second.second;
    if (predictions[i] == labels[i]) ++it->second.first;
  }
  double s = 0.0;
  int64_t counted = 0;
  for (const auto& [c, ct] : per_class) {
    if (ct.second == 0) continue;
    s += static_cast<double>(ct.first) / static_cast<double>(ct.second);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("macro_accuracy: no samples");
  return s / static_cast<double>(counted);
}

std::vector<double> evaluate_model(ModelState& state, std::span<const TaskData> tasks, const Dataset& dataset,
                                   const ssl::AugmentationPolicy& policy, int64_t batch_size) {
  std::vector<double> out;
  const ImageSet& test = dataset.test;
  for (const auto& task : tasks) {
    if (task.test.empty()) throw std::invalid_argument("evaluate_model: task " + std::to_string(task.task_index) + " has an empty test split");
    std::vector<int32_t> preds;
    std::vector<int32_t> labels;
    for (size_t start = 0; start < task.test.size(); start += static_cast<size_t>(batch_size)) {
      const size_t end = std::min(task.test.size(), start + static_cast<size_t>(batch_size));
      std::vector<Tensor> images;
      for (size_t i = start; i < end; ++i) {
        images.push_back(ssl::preprocess(test.image(task.test[i]), test.height, test.width, policy));
        labels.push_back(test.labels[static_cast<size_t>(task.test[i])]);
      }
      const Tensor logits = predict_logits(state, ssl::stack_images(images));
      for (int64_t r = 0; r < logits.dim(0); ++r) {
        int32_t best = 0;
        for (int64_t c = 1; c < logits.dim(1); ++c) {
          if (logits.at(r, c) > logits.at(r, best)) best = static_cast<int32_t>(c);
        }
        preds.push_back(best);
      }
    }
    out.push_back(macro_accuracy(preds, labels, task.classes));
  }
  return out;
}

}  // namespace kaizen
