#include "nbfts/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "nbfts/error.hpp"

namespace nbfts {

namespace {

void resolve_task(const CountPanel& panel, ForecastTask& task) {
  if (task.target_year < 0) task.target_year = panel.n() - 1;
  if (task.train_end < 0) task.train_end = task.target_year - 1;
  if (task.train_begin < 0 || task.train_begin > task.train_end ||
      task.train_end >= task.target_year || task.target_year >= panel.n())
    throw InvalidInputError("ForecastTask: target year must follow the train range");
  if (task.m0 < 1 || task.m0 >= panel.m())
    throw InvalidInputError("ForecastTask: need 1 <= m0 < m");
  if (!(task.level > 0.0 && task.level < 1.0))
    throw InvalidInputError("ForecastTask: level must be in (0,1)");
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw InvalidInputError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  if (v.size() % 2 == 1) return v[h];
  return 0.5 * (v[h - 1] + v[h]);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

ForecastReport run_forecast(const CountPanel& panel, ForecastTask task,
                            const FitConfig& cfg) {
  resolve_task(panel, task);
  const int m = panel.m();
  const int rows = task.target_year - task.train_begin + 1;

  CountPanel sub = CountPanel::make(rows, m);
  sub.counts = panel.counts.middleRows(task.train_begin, rows);
  sub.observed = panel.observed.middleRows(task.train_begin, rows);
  sub.offsets = panel.offsets.middleRows(task.train_begin, rows);
  for (int i = 0; i < rows; ++i)
    sub.year_labels[i] = panel.year_labels[task.train_begin + i];
  sub.week_labels = panel.week_labels;
  // Mask the forecast horizon regardless of its state in the input, and
  // scrub the values so they cannot influence the fit.
  const int target_row = rows - 1;
  for (int j = task.m0; j < m; ++j) {
    sub.observed(target_row, j) = 0;
    sub.counts(target_row, j) = 0;
  }

  const DrawStore store = fit(sub, cfg);
  return assemble_forecast_report(store, target_row, task.m0, task.level);
}

ForecastReport assemble_forecast_report(const DrawStore& store, int target_row,
                                        int m0, double level) {
  if (target_row < 0 || target_row >= store.n)
    throw OutOfBoundsError("assemble_forecast_report: target row out of range");
  if (m0 < 1 || m0 >= store.m)
    throw InvalidInputError("assemble_forecast_report: need 1 <= m0 < m");

  ForecastReport report;
  report.m0 = m0;
  report.level = level;
  const int horizon = store.m - m0;
  report.weeks.resize(horizon);
  report.point.resize(horizon);
  report.lower.resize(horizon);
  report.upper.resize(horizon);

  std::vector<std::pair<int, int>> cells;
  cells.reserve(horizon);
  for (int j = m0; j < store.m; ++j) cells.emplace_back(target_row, j);
  const auto draws = posterior_predictive_cells(store, cells);

  for (int h = 0; h < horizon; ++h) {
    report.weeks[h] = m0 + h;
    const auto summary = predictive_summary(draws[h], level);
    report.point[h] = summary.point;
    report.lower[h] = summary.lower;
    report.upper[h] = summary.upper;
  }

  const int stored = store.stored();
  report.peak_value_draws.resize(stored);
  report.peak_time_draws.resize(stored);
  for (int s = 0; s < stored; ++s) {
    long long best = std::numeric_limits<long long>::min();
    int best_week = m0;
    for (int h = 0; h < horizon; ++h) {
      const long long v = draws[h][s];
      if (v > best) {  // ties resolve to the earliest week
        best = v;
        best_week = m0 + h;
      }
    }
    report.peak_value_draws[s] = best;
    report.peak_time_draws[s] = best_week;
  }
  const auto pv = predictive_summary(report.peak_value_draws, level);
  report.peak_value_lower = pv.lower;
  report.peak_value_upper = pv.upper;
  report.peak_time_set = peak_time_credible_set(report.peak_time_draws, level);
  return report;
}

double mae_by_year(const Eigen::VectorXd& actual, const Eigen::VectorXd& point) {
  if (actual.size() != point.size())
    throw InvalidInputError("mae_by_year: length mismatch");
  double sum = 0.0;
  int cnt = 0;
  for (int i = 0; i < actual.size(); ++i) {
    if (std::isnan(actual[i])) continue;
    sum += std::fabs(actual[i] - point[i]);
    ++cnt;
  }
  if (cnt == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum / cnt;
}

double mae_by_week(const Eigen::VectorXd& actuals, const Eigen::VectorXd& points) {
  return mae_by_year(actuals, points);
}

double ecp(const Eigen::VectorXd& actuals, const std::vector<long long>& lowers,
           const std::vector<long long>& uppers) {
  const auto n = static_cast<std::size_t>(actuals.size());
  if (lowers.size() != n || uppers.size() != n)
    throw InvalidInputError("ecp: length mismatch");
  int covered = 0, cells = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lowers[i] > uppers[i]) throw InvalidInputError("ecp: lower > upper");
    if (std::isnan(actuals[i])) continue;
    ++cells;
    if (actuals[i] >= lowers[i] && actuals[i] <= uppers[i]) ++covered;
  }
  if (cells == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(covered) / cells;
}

double miw(const std::vector<long long>& lowers, const std::vector<long long>& uppers) {
  if (lowers.size() != uppers.size() || lowers.empty())
    throw InvalidInputError("miw: need equal nonempty bounds");
  std::vector<double> widths;
  widths.reserve(lowers.size());
  for (std::size_t i = 0; i < lowers.size(); ++i) {
    if (lowers[i] > uppers[i]) throw InvalidInputError("miw: lower > upper");
    widths.push_back(static_cast<double>(uppers[i] - lowers[i]));
  }
  return median_of(std::move(widths));
}

BaselinePointForecast baseline_mean_fda(const CountPanel& panel,
                                        const ForecastTask& task_in) {
  ForecastTask task = task_in;
  resolve_task(panel, task);
  const int m = panel.m();
  BaselinePointForecast out;
  out.value.resize(m - task.m0);
  out.valid.assign(m - task.m0, 0);
  for (int j = task.m0; j < m; ++j) {
    double sum = 0.0;
    int cnt = 0;
    for (int i = task.train_begin; i <= task.train_end; ++i) {
      if (!panel.is_observed(i, j)) continue;
      sum += panel.counts(i, j) / panel.offsets(i, j);
      ++cnt;
    }
    const int h = j - task.m0;
    if (cnt > 0) {
      out.value[h] = panel.offsets(task.target_year, j) * (sum / cnt);
      out.valid[h] = 1;
    } else {
      out.value[h] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

BaselinePointForecast baseline_rw_fda(const CountPanel& panel,
                                      const ForecastTask& task_in) {
  ForecastTask task = task_in;
  resolve_task(panel, task);
  const int m = panel.m();
  BaselinePointForecast out;
  out.value.resize(m - task.m0);
  out.valid.assign(m - task.m0, 0);
  for (int j = task.m0; j < m; ++j) {
    const int h = j - task.m0;
    out.value[h] = std::numeric_limits<double>::quiet_NaN();
    for (int i = task.train_end; i >= task.train_begin; --i) {
      if (!panel.is_observed(i, j)) continue;
      out.value[h] = panel.offsets(task.target_year, j) *
                     (panel.counts(i, j) / panel.offsets(i, j));
      out.valid[h] = 1;
      break;
    }
  }
  return out;
}

std::vector<int> peak_time_credible_set(const std::vector<int>& draws, double level) {
  if (draws.empty()) throw InvalidInputError("peak_time_credible_set: empty draws");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidParameterError("peak_time_credible_set: level must be in (0,1)");
  std::map<int, int> counts;
  for (int w : draws) ++counts[w];
  std::vector<std::pair<int, int>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const double needed = level * static_cast<double>(draws.size());
  std::vector<int> set;
  long long covered = 0;
  for (const auto& [week, cnt] : items) {
    set.push_back(week);
    covered += cnt;
    if (static_cast<double>(covered) >= needed) break;
  }
  std::sort(set.begin(), set.end());
  return set;
}

TaskScore score_report(const ForecastReport& report, const Eigen::VectorXd& actuals) {
  const auto horizon = static_cast<std::size_t>(report.point.size());
  if (static_cast<std::size_t>(actuals.size()) != horizon)
    throw InvalidInputError("score_report: actuals length mismatch");
  TaskScore score;
  score.mae = mae_by_year(actuals, report.point);
  for (std::size_t h = 0; h < horizon; ++h) {
    if (std::isnan(actuals[h])) continue;
    ++score.cells;
    if (actuals[h] >= report.lower[h] && actuals[h] <= report.upper[h])
      ++score.covered;
  }
  if (score.cells > 0) score.ecp = static_cast<double>(score.covered) / score.cells;
  score.miw = miw(report.lower, report.upper);

  long long best = std::numeric_limits<long long>::min();
  int best_week = -1;
  for (std::size_t h = 0; h < horizon; ++h) {
    if (std::isnan(actuals[h])) continue;
    const long long v = std::llround(actuals[h]);
    if (v > best) {
      best = v;
      best_week = report.weeks[h];
    }
  }
  if (best_week >= 0) {
    score.has_peak = true;
    score.actual_peak_value = best;
    score.actual_peak_time = best_week;
    score.peak_value_covered =
        best >= report.peak_value_lower && best <= report.peak_value_upper;
    score.peak_time_covered =
        std::find(report.peak_time_set.begin(), report.peak_time_set.end(),
                  best_week) != report.peak_time_set.end();
  }
  return score;
}

MetricsRow make_metrics_row(const std::string& task_id, const std::string& variant,
                            const ForecastTask& task, const TaskScore& score) {
  MetricsRow row;
  row.task_id = task_id;
  row.variant = variant;
  row.m0 = task.m0;
  row.level = task.level;
  row.mae = score.mae;
  row.covered = score.covered;
  row.cells = score.cells;
  row.ecp = score.ecp;
  row.miw = score.miw;
  row.peak_value_covered = score.has_peak ? (score.peak_value_covered ? 1 : 0) : -1;
  row.peak_time_covered = score.has_peak ? (score.peak_time_covered ? 1 : 0) : -1;
  return row;
}

std::vector<LongRow> make_long_rows(const std::string& task_id,
                                    const std::string& variant,
                                    const ForecastReport& report,
                                    const Eigen::VectorXd& actuals) {
  std::vector<LongRow> rows;
  rows.reserve(report.weeks.size());
  for (std::size_t h = 0; h < report.weeks.size(); ++h) {
    LongRow row;
    row.task_id = task_id;
    row.variant = variant;
    row.week = report.weeks[h] + 1;
    row.actual = h < static_cast<std::size_t>(actuals.size())
                     ? actuals[h]
                     : std::numeric_limits<double>::quiet_NaN();
    row.point = report.point[h];
    row.lower = report.lower[h];
    row.upper = report.upper[h];
    rows.push_back(row);
  }
  return rows;
}

void write_metrics_table(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics table: " + path);
  out << "task,variant,m0,level,mae,covered,cells,ecp,miw,peak_value_covered,"
         "peak_time_covered\n";
  for (const auto& r : rows) {
    out << r.task_id << ',' << r.variant << ',' << r.m0 << ','
        << format_double(r.level) << ',' << format_double(r.mae) << ','
        << r.covered << ',' << r.cells << ',' << format_double(r.ecp) << ','
        << format_double(r.miw) << ',' << r.peak_value_covered << ','
        << r.peak_time_covered << '\n';
  }
  if (!out) throw IoError("failed writing metrics table: " + path);
}

std::vector<MetricsRow> read_metrics_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics table: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw InvalidInputError("metrics table is empty: " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 11)
      throw InvalidInputError("malformed metrics row in " + path + ": " + line);
    MetricsRow r;
    r.task_id = f[0];
    r.variant = f[1];
    r.m0 = std::stoi(f[2]);
    r.level = std::stod(f[3]);
    r.mae = f[4].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[4]);
    r.covered = std::stoi(f[5]);
    r.cells = std::stoi(f[6]);
    r.ecp = f[7].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[7]);
    r.miw = f[8].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[8]);
    r.peak_value_covered = std::stoi(f[9]);
    r.peak_time_covered = std::stoi(f[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_long_table(const std::string& path, const std::vector<LongRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write long table: " + path);
  out << "task,variant,week,actual,point,lower,upper\n";
  for (const auto& r : rows) {
    out << r.task_id << ',' << r.variant << ',' << r.week << ','
        << format_double(r.actual) << ',' << format_double(r.point) << ','
        << r.lower << ',' << r.upper << '\n';
  }
  if (!out) throw IoError("failed writing long table: " + path);
}

std::vector<LongRow> read_long_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open long table: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("long table is empty: " + path);
  std::vector<LongRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 7)
      throw InvalidInputError("malformed long-table row in " + path + ": " + line);
    LongRow r;
    r.task_id = f[0];
    r.variant = f[1];
    r.week = std::stoi(f[2]);
    r.actual = f[3].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[3]);
    r.point = std::stod(f[4]);
    r.lower = std::stoll(f[5]);
    r.upper = std::stoll(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<EvaluationSummary> evaluate_metrics(const std::vector<MetricsRow>& rows,
                                                const std::vector<LongRow>& long_rows) {
  std::map<std::pair<std::string, int>, EvaluationSummary> acc;
  std::map<std::pair<std::string, int>, std::vector<double>> maes;
  std::map<std::pair<std::string, int>, std::pair<long long, long long>> coverage;
  std::map<std::pair<std::string, int>, std::pair<int, int>> peak_value;
  std::map<std::pair<std::string, int>, std::pair<int, int>> peak_time;
  std::map<std::pair<std::string, int>, std::vector<double>> widths;
  std::map<std::string, int> task_m0;

  for (const auto& r : rows) {
    const auto key = std::make_pair(r.variant, r.m0);
    acc[key].variant = r.variant;
    acc[key].m0 = r.m0;
    acc[key].tasks += 1;
    if (!std::isnan(r.mae)) maes[key].push_back(r.mae);
    coverage[key].first += r.covered;
    coverage[key].second += r.cells;
    if (r.peak_value_covered >= 0) {
      peak_value[key].first += r.peak_value_covered;
      peak_value[key].second += 1;
    }
    if (r.peak_time_covered >= 0) {
      peak_time[key].first += r.peak_time_covered;
      peak_time[key].second += 1;
    }
    task_m0[r.task_id + '\0' + r.variant] = r.m0;
  }
  for (const auto& r : long_rows) {
    auto it = task_m0.find(r.task_id + '\0' + r.variant);
    if (it == task_m0.end()) continue;
    const auto key = std::make_pair(r.variant, it->second);
    widths[key].push_back(static_cast<double>(r.upper - r.lower));
  }

  std::vector<EvaluationSummary> out;
  for (auto& [key, summary] : acc) {
    const auto& mv = maes[key];
    if (!mv.empty()) {
      double s = 0.0;
      for (double v : mv) s += v;
      summary.mean_mae = s / mv.size();
    }
    const auto& cov = coverage[key];
    if (cov.second > 0)
      summary.pooled_ecp = static_cast<double>(cov.first) / cov.second;
    if (!widths[key].empty()) summary.pooled_miw = median_of(widths[key]);
    if (peak_value[key].second > 0)
      summary.peak_value_coverage =
          static_cast<double>(peak_value[key].first) / peak_value[key].second;
    if (peak_time[key].second > 0)
      summary.peak_time_coverage =
          static_cast<double>(peak_time[key].first) / peak_time[key].second;
    out.push_back(summary);
  }
  return out;
}

void write_summary_table(const std::string& path,
                         const std::vector<EvaluationSummary>& summaries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write summary table: " + path);
  out << "variant,m0,tasks,mean_mae,pooled_ecp,pooled_miw,peak_value_coverage,"
         "peak_time_coverage\n";
  for (const auto& s : summaries) {
    out << s.variant << ',' << s.m0 << ',' << s.tasks << ','
        << format_double(s.mean_mae) << ',' << format_double(s.pooled_ecp) << ','
        << format_double(s.pooled_miw) << ','
        << format_double(s.peak_value_coverage) << ','
        << format_double(s.peak_time_coverage) << '\n';
  }
  if (!out) throw IoError("failed writing summary table: " + path);
}

}  // namespace nbfts
