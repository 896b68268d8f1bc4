// Command-line front end: simulate benchmark panels, fit the sampler,
// run rolling-origin forecasts, and pool metric tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nbfts/error.hpp"
#include "nbfts/forecast.hpp"
#include "nbfts/gibbs.hpp"
#include "nbfts/panel.hpp"
#include "nbfts/sim_data.hpp"
#include "nbfts/store_io.hpp"

namespace fs = std::filesystem;
using namespace nbfts;

namespace {

struct FitFlags {
  std::string variant = "nb";
  int k = 6;
  int iterations = 30000;
  int burnin = 5000;
  int thin = 5;
  std::uint64_t seed = 0;
  double r_fixed = 0.0;  // 0 = free
};

void add_fit_flags(CLI::App* cmd, FitFlags& flags) {
  cmd->add_option("--variant", flags.variant, "Model variant: nb|pois|gauss")
      ->check(CLI::IsMember({"nb", "pois", "gauss"}));
  cmd->add_option("--k", flags.k, "Number of factors");
  cmd->add_option("--iterations", flags.iterations, "MCMC iterations");
  cmd->add_option("--burnin", flags.burnin, "Burn-in iterations");
  cmd->add_option("--thin", flags.thin, "Thinning stride");
  cmd->add_option("--seed", flags.seed, "RNG seed");
  cmd->add_option("--r-fixed", flags.r_fixed,
                  "Fix the dispersion at this value (0 = sample it)");
}

FitConfig to_config(const FitFlags& flags) {
  FitConfig cfg;
  cfg.variant = variant_from_name(flags.variant);
  cfg.K = flags.k;
  cfg.iterations = flags.iterations;
  cfg.burn_in = flags.burnin;
  cfg.thin = flags.thin;
  cfg.seed = flags.seed;
  if (flags.r_fixed > 0.0) cfg.r_fixed = flags.r_fixed;
  return cfg;
}

CountPanel load_panel(const std::string& counts_path, const std::string& offsets_path) {
  CountPanel panel = read_counts(counts_path);
  if (!offsets_path.empty()) {
    read_offsets(offsets_path, panel);
  } else {
    std::cerr << "note: no offsets file given, offsets default to 1\n";
  }
  return panel;
}

std::string rep_name(const char* prefix, int rep) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.csv", prefix, rep + 1);
  return buf;
}

int run_simulate(const std::string& out_dir, int reps, const SimConfig& base) {
  fs::create_directories(out_dir);
  for (int rep = 0; rep < reps; ++rep) {
    SimConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(rep);
    const auto [panel, truth] = simulate(cfg);
    write_counts(panel, (fs::path(out_dir) / rep_name("panel", rep)).string());
    write_matrix_csv(truth.true_curves,
                     (fs::path(out_dir) / rep_name("truth", rep)).string());
  }
  return 0;
}

int run_fit(const std::string& counts, const std::string& offsets,
            const FitFlags& flags, const std::string& out_dir) {
  const CountPanel panel = load_panel(counts, offsets);
  const DrawStore store = fit(panel, to_config(flags));
  save_drawstore(store, out_dir);
  validate_drawstore(out_dir);
  std::cout << "wrote " << store.stored() << " draws to " << out_dir
            << " (ess_r=" << store.ess_r << ", ess_sigma_eps=" << store.ess_sigma_eps
            << ")\n";
  return 0;
}

int run_forecast_cmd(const std::string& counts, const std::string& offsets,
                     const FitFlags& flags, const std::string& target_year,
                     int m0, double level, const std::string& out_dir,
                     const std::string& task_id) {
  const CountPanel panel = load_panel(counts, offsets);
  ForecastTask task;
  task.m0 = m0;
  task.level = level;
  if (!target_year.empty()) {
    task.target_year = -1;
    for (int i = 0; i < panel.n(); ++i)
      if (panel.year_labels[i] == target_year) task.target_year = i;
    if (task.target_year < 0)
      throw InvalidInputError("target year " + target_year + " not in panel");
  }
  const ForecastReport report = run_forecast(panel, task, to_config(flags));

  // score against whatever the input panel has observed over the horizon
  const int target = task.target_year < 0 ? panel.n() - 1 : task.target_year;
  Eigen::VectorXd actuals(report.weeks.size());
  for (std::size_t h = 0; h < report.weeks.size(); ++h) {
    const int j = report.weeks[h];
    actuals[h] = panel.is_observed(target, j)
                     ? static_cast<double>(panel.counts(target, j))
                     : std::numeric_limits<double>::quiet_NaN();
  }
  const TaskScore score = score_report(report, actuals);

  fs::create_directories(out_dir);
  const std::string id =
      task_id.empty() ? ("year_" + panel.year_labels[target]) : task_id;
  ForecastTask resolved = task;
  resolved.target_year = target;
  write_metrics_table((fs::path(out_dir) / "metrics.csv").string(),
                      {make_metrics_row(id, flags.variant, resolved, score)});
  write_long_table((fs::path(out_dir) / "long.csv").string(),
                   make_long_rows(id, flags.variant, report, actuals));
  {
    std::ofstream peak(fs::path(out_dir) / "peak.csv");
    peak << "task,variant,level,peak_value_lower,peak_value_upper,peak_time_set\n";
    peak << id << ',' << flags.variant << ',' << level << ','
         << report.peak_value_lower << ',' << report.peak_value_upper << ',';
    for (std::size_t i = 0; i < report.peak_time_set.size(); ++i)
      peak << (i ? ";" : "") << (report.peak_time_set[i] + 1);
    peak << '\n';
  }
  std::cout << "task " << id << ": mae=" << score.mae << " ecp=" << score.ecp
            << " miw=" << score.miw << '\n';
  return 0;
}

int run_evaluate(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<MetricsRow> rows;
  std::vector<LongRow> long_rows;
  for (const auto& input : inputs) {
    std::vector<fs::path> metric_files;
    if (fs::is_directory(input)) {
      for (const auto& entry : fs::recursive_directory_iterator(input))
        if (entry.path().filename() == "metrics.csv")
          metric_files.push_back(entry.path());
      std::sort(metric_files.begin(), metric_files.end());
    } else {
      metric_files.emplace_back(input);
    }
    for (const auto& file : metric_files) {
      const auto batch = read_metrics_table(file.string());
      rows.insert(rows.end(), batch.begin(), batch.end());
      const fs::path long_file = file.parent_path() / "long.csv";
      if (fs::exists(long_file)) {
        const auto lbatch = read_long_table(long_file.string());
        long_rows.insert(long_rows.end(), lbatch.begin(), lbatch.end());
      }
    }
  }
  if (rows.empty()) throw InvalidInputError("evaluate: no metrics tables found");
  const auto summaries = evaluate_metrics(rows, long_rows);
  write_summary_table(out, summaries);
  std::cout << "pooled " << rows.size() << " tasks into " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integer-valued functional time series modeling and forecasting"};
  app.set_config("--config", "", "Read options from a flat key=value file");
  app.require_subcommand(1);

  auto* sim_cmd = app.add_subcommand("simulate", "Generate benchmark panels");
  SimConfig sim_cfg;
  int reps = 1;
  std::string sim_out = "sim_out";
  sim_cmd->add_option("--n", sim_cfg.n, "Years");
  sim_cmd->add_option("--m", sim_cfg.m, "Points per year");
  sim_cmd->add_option("--r", sim_cfg.r, "True dispersion");
  sim_cmd->add_option("--rsnr", sim_cfg.rsnr, "Root signal-to-noise ratio");
  sim_cmd->add_option("--missing-frac", sim_cfg.missing_frac, "Missing fraction");
  sim_cmd->add_option("--phi", sim_cfg.phi, "True AR coefficient");
  sim_cmd->add_option("--seed", sim_cfg.seed, "Base seed (rep i uses seed+i)");
  sim_cmd->add_option("--reps", reps, "Number of replications");
  sim_cmd->add_option("--out", sim_out, "Output directory");

  auto* fit_cmd = app.add_subcommand("fit", "Run the Gibbs sampler");
  FitFlags fit_flags;
  std::string fit_counts, fit_offsets, fit_out = "fit_out";
  fit_cmd->add_option("--counts", fit_counts, "Counts CSV (year,week,count)")
      ->required();
  fit_cmd->add_option("--offsets", fit_offsets, "Offsets CSV (year,population)");
  add_fit_flags(fit_cmd, fit_flags);
  fit_cmd->add_option("--out", fit_out, "DrawStore output directory");

  auto* fc_cmd = app.add_subcommand("forecast", "Rolling-origin forecast");
  FitFlags fc_flags;
  std::string fc_counts, fc_offsets, fc_out = "forecast_out", fc_target, fc_id;
  int m0 = 9;
  double level = 0.95;
  fc_cmd->add_option("--counts", fc_counts, "Counts CSV")->required();
  fc_cmd->add_option("--offsets", fc_offsets, "Offsets CSV");
  add_fit_flags(fc_cmd, fc_flags);
  fc_cmd->add_option("--m0", m0, "Observed weeks of the target year");
  fc_cmd->add_option("--level", level, "Interval level");
  fc_cmd->add_option("--target-year", fc_target, "Target year label (default: last)");
  fc_cmd->add_option("--task-id", fc_id, "Task id in output tables");
  fc_cmd->add_option("--out", fc_out, "Output directory");

  auto* ev_cmd = app.add_subcommand("evaluate", "Pool metric tables");
  std::vector<std::string> ev_inputs;
  std::string ev_out = "summary.csv";
  ev_cmd->add_option("--inputs", ev_inputs, "Directories or metrics.csv files")
      ->required();
  ev_cmd->add_option("--out", ev_out, "Summary output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) return run_simulate(sim_out, reps, sim_cfg);
    if (fit_cmd->parsed()) return run_fit(fit_counts, fit_offsets, fit_flags, fit_out);
    if (fc_cmd->parsed())
      return run_forecast_cmd(fc_counts, fc_offsets, fc_flags, fc_target, m0, level,
                              fc_out, fc_id);
    if (ev_cmd->parsed()) return run_evaluate(ev_inputs, ev_out);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "NBFTS_E_INTERNAL: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
