#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "nbfts/error.hpp"
#include "nbfts/forecast.hpp"
#include "nbfts/sim_data.hpp"

using namespace nbfts;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("mae fixtures") {
  VectorXd a(2), p(2);
  a << 0, 10;
  p << 5, 5;
  CHECK(mae_by_year(a, a) == doctest::Approx(0.0));
  CHECK(mae_by_year(a, p) == doctest::Approx(5.0));
  VectorXd a2(2), p2(2);
  a2 << 10, 0;
  p2 << 5, 5;
  CHECK(mae_by_year(a2, p2) == doctest::Approx(mae_by_year(a, p)));

  VectorXd e(2), f(2);
  e << 2, 4;
  f << 0, 0;
  CHECK(mae_by_week(e, f) == doctest::Approx(3.0));
  CHECK(mae_by_week(2.0 * e, 2.0 * f) == doctest::Approx(6.0));

  VectorXd with_nan(3);
  with_nan << 1.0, std::numeric_limits<double>::quiet_NaN(), 3.0;
  VectorXd pt(3);
  pt << 2.0, 100.0, 2.0;
  CHECK(mae_by_year(with_nan, pt) == doctest::Approx(1.0));

  CHECK_THROWS_AS(mae_by_year(VectorXd::Zero(2), VectorXd::Zero(3)),
                  InvalidInputError);
}

TEST_CASE("ecp fixtures") {
  VectorXd actual(4);
  actual << 1, 5, 9, 3;
  std::vector<long long> lo{0, 0, 0, 0}, hi{10, 10, 10, 10};
  CHECK(ecp(actual, lo, hi) == doctest::Approx(1.0));
  std::vector<long long> lo2{2, 6, 10, 4}, hi2{3, 7, 11, 5};
  CHECK(ecp(actual, lo2, hi2) == doctest::Approx(0.0));
  std::vector<long long> lo3{0, 0, 0, 4}, hi3{10, 10, 10, 5};
  CHECK(ecp(actual, lo3, hi3) == doctest::Approx(0.75));
  std::vector<long long> bad_hi{10, 10, 10, 3};
  std::vector<long long> bad_lo{0, 0, 0, 4};
  CHECK_THROWS_AS(ecp(actual, bad_lo, bad_hi), InvalidInputError);
}

TEST_CASE("miw fixtures") {
  CHECK(miw({0, 0, 0}, {1, 3, 5}) == doctest::Approx(3.0));
  CHECK(miw({2, 2, 2, 2}, {6, 6, 6, 6}) == doctest::Approx(4.0));
  CHECK(miw({0, 0}, {2, 4}) == doctest::Approx(3.0));
  CHECK_THROWS_AS(miw({5}, {1}), InvalidInputError);
}

namespace {

CountPanel tiny_panel(int n, int m) {
  CountPanel p = CountPanel::make(n, m);
  p.counts.setZero();
  return p;
}

}  // namespace

TEST_CASE("baseline forecasts") {
  SUBCASE("hand computations") {
    CountPanel p = tiny_panel(3, 4);
    // rates 1 and 3 in the train years, offsets vary by year
    p.offsets.row(0).setConstant(2.0);
    p.offsets.row(1).setConstant(4.0);
    p.offsets.row(2).setConstant(3.0);
    for (int j = 0; j < 4; ++j) {
      p.counts(0, j) = 2;   // rate 1
      p.counts(1, j) = 12;  // rate 3
    }
    ForecastTask task;
    task.target_year = 2;
    task.m0 = 1;
    const auto mean_fda = baseline_mean_fda(p, task);
    const auto rw_fda = baseline_rw_fda(p, task);
    for (int h = 0; h < 3; ++h) {
      CHECK(mean_fda.valid[h] == 1);
      CHECK(mean_fda.value[h] == doctest::Approx(3.0 * 2.0));  // E_t * mean rate
      CHECK(rw_fda.value[h] == doctest::Approx(3.0 * 3.0));    // E_t * last rate
    }
  }

  SUBCASE("single train year makes the two baselines equal") {
    CountPanel p = tiny_panel(2, 5);
    for (int j = 0; j < 5; ++j) p.counts(0, j) = 3 + j;
    ForecastTask task;
    task.target_year = 1;
    task.m0 = 2;
    const auto a = baseline_mean_fda(p, task);
    const auto b = baseline_rw_fda(p, task);
    CHECK((a.value - b.value).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("rw falls back to the most recent observed year") {
    CountPanel p = tiny_panel(3, 3);
    p.counts(0, 2) = 9;
    p.observed(1, 2) = 0;  // previous year missing at that week
    p.counts(1, 2) = 0;
    ForecastTask task;
    task.target_year = 2;
    task.m0 = 1;
    const auto b = baseline_rw_fda(p, task);
    CHECK(b.valid[1] == 1);
    CHECK(b.value[1] == doctest::Approx(9.0));
  }

  SUBCASE("rw hand computation with offsets") {
    CountPanel p = tiny_panel(2, 2);
    p.counts(0, 1) = 10;
    p.offsets.row(0).setConstant(2.0);
    p.offsets.row(1).setConstant(3.0);
    ForecastTask task;
    task.target_year = 1;
    task.m0 = 1;
    const auto b = baseline_rw_fda(p, task);
    CHECK(b.value[0] == doctest::Approx(15.0));
  }

  SUBCASE("no history yields a missing flag") {
    CountPanel p = tiny_panel(2, 3);
    p.observed(0, 2) = 0;
    ForecastTask task;
    task.target_year = 1;
    task.m0 = 1;
    const auto a = baseline_mean_fda(p, task);
    const auto b = baseline_rw_fda(p, task);
    CHECK(a.valid[1] == 0);
    CHECK(b.valid[1] == 0);
    CHECK(std::isnan(a.value[1]));
  }
}

TEST_CASE("peak_time_credible_set") {
  SUBCASE("hand case") {
    const std::vector<int> draws{5, 5, 5, 6, 7};
    const auto set = peak_time_credible_set(draws, 0.6);
    REQUIRE(set.size() == 1);
    CHECK(set[0] == 5);
  }
  SUBCASE("greedy minimality and mass bound") {
    Rng rng(5, 0);
    for (int rep = 0; rep < 30; ++rep) {
      std::vector<int> draws(200);
      for (auto& d : draws) d = static_cast<int>(rng.uniform_below(8)) + 30;
      const double level = 0.8;
      const double needed = level * draws.size();
      const auto set = peak_time_credible_set(draws, level);
      auto count_of = [&](const std::vector<int>& s) {
        int c = 0;
        for (int d : draws)
          if (std::find(s.begin(), s.end(), d) != s.end()) ++c;
        return c;
      };
      REQUIRE(static_cast<double>(count_of(set)) >= needed);
      // dropping the least-mass member must fall below the level
      std::vector<int> counts(64, 0);
      for (int d : draws) ++counts[d];
      auto smallest = std::min_element(set.begin(), set.end(), [&](int a, int b) {
        return counts[a] != counts[b] ? counts[a] < counts[b] : a > b;
      });
      std::vector<int> reduced = set;
      reduced.erase(std::find(reduced.begin(), reduced.end(), *smallest));
      CHECK(static_cast<double>(count_of(reduced)) < needed);
    }
  }
}

TEST_CASE("run_forecast on a repeating deterministic pattern") {
  const int years = 12, m = 20, m0 = 8;
  CountPanel p = CountPanel::make(years, m);
  VectorXd pattern(m);
  for (int j = 0; j < m; ++j)
    pattern[j] = 1000.0 * (1.5 + std::sin(2.0 * M_PI * j / m));
  for (int i = 0; i < years; ++i)
    for (int j = 0; j < m; ++j)
      p.counts(i, j) = static_cast<long long>(std::llround(pattern[j]));

  ForecastTask task;
  task.m0 = m0;
  task.level = 0.95;
  FitConfig cfg;
  cfg.K = 3;
  cfg.iterations = 900;
  cfg.burn_in = 300;
  cfg.thin = 3;
  cfg.variant = Variant::NB;
  cfg.seed = 42;
  const ForecastReport report = run_forecast(p, task, cfg);

  SUBCASE("points reproduce the pattern") {
    for (int h = 0; h < m - m0; ++h)
      CHECK(report.point[h] ==
            doctest::Approx(pattern[m0 + h]).epsilon(0.10));
  }

  SUBCASE("report structure") {
    for (std::size_t s = 0; s < report.peak_time_draws.size(); ++s) {
      REQUIRE(report.peak_time_draws[s] >= m0);
      REQUIRE(report.peak_time_draws[s] < m);
    }
    for (std::size_t h = 0; h < report.lower.size(); ++h)
      REQUIRE(report.lower[h] <= report.upper[h]);
    for (int w : report.peak_time_set) {
      CHECK(w >= m0);
      CHECK(w < m);
    }
  }

  SUBCASE("per-draw peak consistency against the underlying fit") {
    // rebuild the masked panel and re-run the identical fit
    CountPanel masked = p;
    for (int j = m0; j < m; ++j) {
      masked.observed(years - 1, j) = 0;
      masked.counts(years - 1, j) = 0;
    }
    const DrawStore store = fit(masked, cfg);
    std::vector<std::pair<int, int>> cells;
    for (int j = m0; j < m; ++j) cells.emplace_back(years - 1, j);
    const auto cell_draws = posterior_predictive_cells(store, cells);
    REQUIRE(static_cast<int>(report.peak_value_draws.size()) == store.stored());
    for (int s = 0; s < store.stored(); ++s) {
      const int idx = report.peak_time_draws[s] - m0;
      CHECK(cell_draws[idx][s] == report.peak_value_draws[s]);
      for (int h = 0; h < m - m0; ++h)
        REQUIRE(cell_draws[h][s] <= report.peak_value_draws[s]);
    }
  }

  SUBCASE("masked cells are never read (poisoning)") {
    CountPanel poisoned = p;
    for (int j = m0; j < m; ++j) poisoned.counts(years - 1, j) = 99999999;
    const ForecastReport again = run_forecast(poisoned, task, cfg);
    CHECK((again.point - report.point).cwiseAbs().maxCoeff() == 0.0);
    CHECK(again.lower == report.lower);
    CHECK(again.upper == report.upper);
    CHECK(again.peak_time_set == report.peak_time_set);
  }
}

TEST_CASE("score_report and metric tables") {
  ForecastReport report;
  report.m0 = 2;
  report.level = 0.9;
  report.weeks = {2, 3, 4};
  report.point = (VectorXd(3) << 10.0, 20.0, 5.0).finished();
  report.lower = {8, 15, 2};
  report.upper = {12, 25, 7};
  report.peak_value_lower = 18;
  report.peak_value_upper = 26;
  report.peak_time_set = {3};
  report.peak_value_draws = {20, 22};
  report.peak_time_draws = {3, 3};

  VectorXd actual(3);
  actual << 11, 24, 1;
  const TaskScore score = score_report(report, actual);
  CHECK(score.cells == 3);
  CHECK(score.covered == 2);
  CHECK(score.ecp == doctest::Approx(2.0 / 3.0));
  CHECK(score.mae == doctest::Approx((1.0 + 4.0 + 4.0) / 3.0));
  CHECK(score.miw == doctest::Approx(5.0));
  CHECK(score.has_peak);
  CHECK(score.actual_peak_value == 24);
  CHECK(score.actual_peak_time == 3);
  CHECK(score.peak_value_covered);
  CHECK(score.peak_time_covered);

  SUBCASE("tables round trip and pool correctly") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "nbfts_metrics_test";
    fs::create_directories(dir);
    ForecastTask task;
    task.m0 = 2;
    task.level = 0.9;
    task.target_year = 5;

    const MetricsRow row1 = make_metrics_row("t1", "nb", task, score);
    MetricsRow row2 = row1;
    row2.task_id = "t2";
    row2.covered = 3;
    row2.cells = 3;
    row2.ecp = 1.0;
    const auto metrics_path = (dir / "metrics.csv").string();
    write_metrics_table(metrics_path, {row1, row2});
    const auto rows = read_metrics_table(metrics_path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].task_id == "t1");
    CHECK(rows[0].covered == 2);
    CHECK(rows[1].ecp == doctest::Approx(1.0));

    const auto long1 = make_long_rows("t1", "nb", report, actual);
    auto long2 = make_long_rows("t2", "nb", report, actual);
    std::vector<LongRow> all_long = long1;
    all_long.insert(all_long.end(), long2.begin(), long2.end());
    const auto long_path = (dir / "long.csv").string();
    write_long_table(long_path, all_long);
    const auto long_rows = read_long_table(long_path);
    REQUIRE(long_rows.size() == 6);
    CHECK(long_rows[0].week == 3);  // 1-based in files

    const auto summaries = evaluate_metrics(rows, long_rows);
    REQUIRE(summaries.size() == 1);
    // pooled ECP = total covered / total cells
    CHECK(summaries[0].pooled_ecp == doctest::Approx(5.0 / 6.0));
    // equals the cell-weighted mean of per-task coverage
    const double weighted =
        (rows[0].ecp * rows[0].cells + rows[1].ecp * rows[1].cells) /
        (rows[0].cells + rows[1].cells);
    CHECK(summaries[0].pooled_ecp == doctest::Approx(weighted));
    CHECK(summaries[0].pooled_miw == doctest::Approx(5.0));
    CHECK(summaries[0].tasks == 2);
    fs::remove_all(dir);
  }
}

TEST_CASE("run_forecast validates the task") {
  CountPanel p = tiny_panel(4, 6);
  FitConfig cfg;
  ForecastTask bad;
  bad.target_year = 0;
  CHECK_THROWS_AS(run_forecast(p, bad, cfg), InvalidInputError);
  ForecastTask bad2;
  bad2.m0 = 6;
  CHECK_THROWS_AS(run_forecast(p, bad2, cfg), InvalidInputError);
}
