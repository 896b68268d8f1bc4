#include "nbfts/sim_data.hpp"

#include <cmath>

#include "nbfts/basis.hpp"
#include "nbfts/count_core.hpp"
#include "nbfts/error.hpp"

namespace nbfts {

void SimConfig::validate() const {
  if (n < 2 || m < 2) throw InvalidParameterError("SimConfig: need n, m >= 2");
  if (K_true < 1 || K_true > 4)
    throw InvalidParameterError("SimConfig: K_true must be in 1..4");
  if (!(phi > -1.0 && phi < 1.0))
    throw InvalidParameterError("SimConfig: |phi| must be < 1");
  if (!(rsnr > 0.0) || !(r > 0.0))
    throw InvalidParameterError("SimConfig: rsnr and r must be positive");
  if (!(missing_frac >= 0.0 && missing_frac < 1.0))
    throw InvalidParameterError("SimConfig: missing_frac must be in [0,1)");
}

namespace {

// Factor curves of the benchmark: the constant 1/sqrt(m) plus polynomials
// of degrees 2, 3 and 4, Gram-Schmidt orthonormalized discretely against
// the constant and each other (there is no degree-1 factor, so the columns
// keep their linear trends). Signs are arbitrary for an orthogonal family;
// the orientation below places the bulk of the mean curve in the second
// half of the year, so the forecast horizon straddles the seasonal peak.
Eigen::MatrixXd sim_factor_matrix(int m, int k_true) {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(m, 0.0, 1.0);
  Eigen::MatrixXd vander(m, 4);
  vander.col(0).setOnes();
  for (int c = 1; c < 4; ++c) vander.col(c) = grid.array().pow(c + 1).matrix();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(vander);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, 4);
  const double right_end_sign[4] = {+1.0, +1.0, -1.0, +1.0};
  for (int c = 0; c < 4; ++c)
    if (q(m - 1, c) * right_end_sign[c] < 0.0) q.col(c) = -q.col(c);
  return q.leftCols(k_true);
}

}  // namespace

std::pair<CountPanel, SimTruth> simulate(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, 0);
  const int n = cfg.n, m = cfg.m, kt = cfg.K_true;
  const double root_m = std::sqrt(static_cast<double>(m));

  SimTruth truth;
  truth.f_star = sim_factor_matrix(m, kt);

  const double innov_var = cfg.innovation_value_is_sd
                               ? 1.0 - cfg.phi * cfg.phi
                               : std::sqrt(1.0 - cfg.phi * cfg.phi);
  const double innov_sd = std::sqrt(innov_var);
  const double stat_sd = std::sqrt(innov_var / (1.0 - cfg.phi * cfg.phi));

  truth.beta_star.resize(n, kt);
  for (int k = 0; k < kt; ++k) {
    double gamma = rng.normal(0.0, stat_sd);
    for (int i = 0; i < n; ++i) {
      if (i > 0) gamma = cfg.phi * gamma + rng.normal(0.0, innov_sd);
      truth.beta_star(i, k) = root_m + (root_m / (k + 1)) * gamma;
    }
  }

  truth.mu_star = truth.beta_star * truth.f_star.transpose();
  const double mean_mu = truth.mu_star.mean();
  const double sd_mu = std::sqrt(
      (truth.mu_star.array() - mean_mu).square().sum() / (n * m - 1.0));
  truth.sigma_star = sd_mu / cfg.rsnr;

  truth.theta_star.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      truth.theta_star(i, j) = truth.mu_star(i, j) + truth.sigma_star * rng.normal();

  truth.true_curves =
      (truth.mu_star.array() + 0.5 * truth.sigma_star * truth.sigma_star)
          .exp()
          .matrix();

  CountPanel panel = CountPanel::make(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      panel.counts(i, j) = sample_nb(NBParams{cfg.r, truth.theta_star(i, j)}, rng);

  // Cells protected from deletion: the first 30 points of the last year,
  // which the benchmark task treats as observed. Resample if a whole
  // unprotected row would disappear.
  const int protect = std::min(30, m);
  for (;;) {
    panel.observed.setConstant(1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const bool protected_cell = (i == n - 1 && j < protect);
        if (!protected_cell && rng.uniform() < cfg.missing_frac)
          panel.observed(i, j) = 0;
      }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      bool any = false;
      for (int j = 0; j < m; ++j) any = any || panel.observed(i, j);
      ok = any;
    }
    if (ok) break;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (!panel.observed(i, j)) panel.counts(i, j) = 0;

  return {std::move(panel), std::move(truth)};
}

ForecastTask forecast_task_for_sim(const CountPanel& panel) {
  if (panel.m() <= 30)
    throw InvalidInputError("forecast_task_for_sim: need more than 30 points");
  ForecastTask task;
  task.train_begin = 0;
  task.train_end = panel.n() - 2;
  task.target_year = panel.n() - 1;
  task.m0 = 30;
  task.level = 0.95;
  return task;
}

}  // namespace nbfts
