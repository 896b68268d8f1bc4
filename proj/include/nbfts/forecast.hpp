#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nbfts/gibbs.hpp"
#include "nbfts/panel.hpp"

namespace nbfts {

// Rolling-origin task: fit on train years plus the first m0 weeks of the
// target year, forecast the remaining m - m0 weeks.
struct ForecastTask {
  int train_begin = 0;
  int train_end = -1;    // inclusive; -1 resolves to target_year - 1
  int target_year = -1;  // -1 resolves to the last panel row
  int m0 = 9;
  double level = 0.95;
};

struct ForecastReport {
  int m0 = 0;
  double level = 0.95;
  std::vector<int> weeks;  // 0-based target-week indices m0..m-1
  Eigen::VectorXd point;
  std::vector<long long> lower, upper;
  std::vector<long long> peak_value_draws;
  std::vector<int> peak_time_draws;  // 0-based week indices
  long long peak_value_lower = 0, peak_value_upper = 0;
  std::vector<int> peak_time_set;  // sorted ascending
};

// Fits the configured variant on the train years plus the m0 partial
// observations (target-year weeks beyond m0 are masked regardless of their
// state in the input) and assembles the report from the predictive draws.
ForecastReport run_forecast(const CountPanel& panel, ForecastTask task,
                            const FitConfig& cfg);

// Report assembly from an existing fit whose target row has weeks >= m0
// unobserved; run_forecast is mask + fit + this.
ForecastReport assemble_forecast_report(const DrawStore& store, int target_row,
                                        int m0, double level);

// Mean absolute error across the forecast horizon of one year. NaN actuals
// are skipped in the average.
double mae_by_year(const Eigen::VectorXd& actual, const Eigen::VectorXd& point);
// Mean absolute error across years at one fixed week.
double mae_by_week(const Eigen::VectorXd& actuals, const Eigen::VectorXd& points);

// Fraction of cells with lower <= actual <= upper, NaN actuals skipped.
double ecp(const Eigen::VectorXd& actuals, const std::vector<long long>& lowers,
           const std::vector<long long>& uppers);

// Median of (upper - lower), mean-of-middle-two convention.
double miw(const std::vector<long long>& lowers, const std::vector<long long>& uppers);

struct BaselinePointForecast {
  Eigen::VectorXd value;             // m - m0 entries
  std::vector<std::uint8_t> valid;   // 0 where no usable history exists
};

// Pointwise train-year mean of Z/E rescaled by the target offsets.
BaselinePointForecast baseline_mean_fda(const CountPanel& panel,
                                        const ForecastTask& task);
// Most recent observed year's rate rescaled by the target offsets.
BaselinePointForecast baseline_rw_fda(const CountPanel& panel,
                                      const ForecastTask& task);

// Smallest set of weeks whose posterior mass reaches `level`, assembled by
// descending-probability greedy inclusion (may be disjoint).
std::vector<int> peak_time_credible_set(const std::vector<int>& draws,
                                        double level);

struct TaskScore {
  double mae = std::numeric_limits<double>::quiet_NaN();
  int covered = 0;
  int cells = 0;
  double ecp = std::numeric_limits<double>::quiet_NaN();
  double miw = std::numeric_limits<double>::quiet_NaN();
  bool has_peak = false;
  long long actual_peak_value = 0;
  int actual_peak_time = -1;  // 0-based week
  bool peak_value_covered = false;
  bool peak_time_covered = false;
};

// Scores a report against the held-out actual counts for the horizon
// (NaN = missing, skipped in MAE/ECP; peak features use observed cells).
TaskScore score_report(const ForecastReport& report,
                       const Eigen::VectorXd& actuals);

// --- metric table formats -------------------------------------------------

struct MetricsRow {
  std::string task_id;
  std::string variant;
  int m0 = 0;
  double level = 0.95;
  double mae = std::numeric_limits<double>::quiet_NaN();
  int covered = 0;
  int cells = 0;
  double ecp = std::numeric_limits<double>::quiet_NaN();
  double miw = std::numeric_limits<double>::quiet_NaN();
  int peak_value_covered = -1;  // -1 = unknown
  int peak_time_covered = -1;
};

struct LongRow {
  std::string task_id;
  std::string variant;
  int week = 0;  // 1-based in files
  double actual = std::numeric_limits<double>::quiet_NaN();
  double point = 0.0;
  long long lower = 0, upper = 0;
};

MetricsRow make_metrics_row(const std::string& task_id, const std::string& variant,
                            const ForecastTask& task, const TaskScore& score);
std::vector<LongRow> make_long_rows(const std::string& task_id,
                                    const std::string& variant,
                                    const ForecastReport& report,
                                    const Eigen::VectorXd& actuals);

void write_metrics_table(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_table(const std::string& path);
void write_long_table(const std::string& path, const std::vector<LongRow>& rows);
std::vector<LongRow> read_long_table(const std::string& path);

// Pooled summary per (variant, m0): mean of task MAEs, pooled ECP over
// cells, pooled MIW over all interval widths, peak coverage rates.
struct EvaluationSummary {
  std::string variant;
  int m0 = 0;
  int tasks = 0;
  double mean_mae = std::numeric_limits<double>::quiet_NaN();
  double pooled_ecp = std::numeric_limits<double>::quiet_NaN();
  double pooled_miw = std::numeric_limits<double>::quiet_NaN();
  double peak_value_coverage = std::numeric_limits<double>::quiet_NaN();
  double peak_time_coverage = std::numeric_limits<double>::quiet_NaN();
};

std::vector<EvaluationSummary> evaluate_metrics(const std::vector<MetricsRow>& rows,
                                                const std::vector<LongRow>& long_rows);
void write_summary_table(const std::string& path,
                         const std::vector<EvaluationSummary>& summaries);

}  // namespace nbfts
