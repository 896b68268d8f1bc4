#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nbfts/basis.hpp"
#include "nbfts/error.hpp"
#include "nbfts/latent_model.hpp"
#include "support/oracles.hpp"

using namespace nbfts;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("compute_zpg plug-ins") {
  CHECK(compute_zpg(5.0, 5.0, 0.3) == doctest::Approx(std::log(5.0)));
  CHECK(compute_zpg(0.0, 1.0, 0.25) == doctest::Approx(-2.0));
  CHECK(compute_zpg(10.0, 2.0, 0.5) == doctest::Approx(8.0 + std::log(2.0)));
  CHECK_THROWS_AS(compute_zpg(1.0, 1.0, 0.0), InvalidStateError);
}

TEST_CASE("update_theta limits") {
  Rng rng(31, 0);
  SUBCASE("prior-dominated limit") {
    const ThetaCell cell{3.0, 2.0, 1.0, 1.5, 0.7};
    const double draw = update_theta(cell, 1e-6, rng);
    CHECK(std::fabs(draw - 2.2) < 1e-4);
  }
  SUBCASE("data-dominated limit") {
    const ThetaCell cell{3.0, 2.0, 1e8, 1.5, 0.7};
    const double zpg = compute_zpg(3.0, 2.0, 1e8);
    const double draw = update_theta(cell, 1.0, rng);
    CHECK(std::fabs(draw - zpg) < 1e-3);
  }
  SUBCASE("invalid state") {
    CHECK_THROWS_AS(update_theta({1, 1, -1, 0, 0}, 1.0, rng), InvalidStateError);
    CHECK_THROWS_AS(update_theta({1, 1, 1, 0, 0}, 0.0, rng), InvalidStateError);
  }
}

namespace {

// Single-cell Gibbs chain: theta | xi and xi | theta at fixed mu, sigma, r.
std::vector<double> single_cell_chain(long long z, double r, double mu_total,
                                      double sigma_eps, int kept, int burn,
                                      const PgTuning& tuning, std::uint64_t seed) {
  Rng rng(seed, 0);
  double theta = mu_total;
  std::vector<double> out;
  out.reserve(kept);
  for (int it = 0; it < kept + burn; ++it) {
    const double xi =
        update_xi(static_cast<double>(z), r, theta, rng, tuning);
    const ThetaCell cell{static_cast<double>(z), r, xi, mu_total, 0.0};
    theta = update_theta(cell, sigma_eps, rng);
    if (it >= burn) out.push_back(theta);
  }
  return out;
}

}  // namespace

TEST_CASE("single-cell Gibbs matches the quadrature posterior") {
  SUBCASE("small cell, spec-default PG tuning") {
    const auto chain = single_cell_chain(6, 2.5, 1.0, 0.8, 20000, 500, PgTuning{}, 77);
    const auto post = oracles::nb_theta_grid_posterior(6, 2.5, 1.0, 0.8, -2.0, 4.5, 2001);
    CHECK(oracles::tv_sample_vs_grid(chain, post, 40) < 0.05);
  }
  SUBCASE("large cell, engine PG tuning (Gaussian branch)") {
    PgTuning fast{48.0, 8, 16};
    const auto chain =
        single_cell_chain(55, 10.0, std::log(50.0), 0.5, 20000, 500, fast, 78);
    const auto post = oracles::nb_theta_grid_posterior(55, 10.0, std::log(50.0), 0.5,
                                                       2.3, 5.6, 2001);
    CHECK(oracles::tv_sample_vs_grid(chain, post, 40) < 0.05);
  }
}

TEST_CASE("update_xi moments and determinism") {
  const int n = 100000;
  SUBCASE("z=0, r=1, theta=0 gives PG(1,0)") {
    Rng rng(41, 0);
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += update_xi(0.0, 1.0, 0.0, rng);
    mean /= n;
    CHECK(std::fabs(mean - 0.25) < 0.005);
  }
  SUBCASE("z=3, r=1, theta - log r = 2 gives PG(4,2)") {
    Rng rng(42, 0);
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += update_xi(3.0, 1.0, 2.0, rng);
    mean /= n;
    CHECK(std::fabs(mean - std::tanh(1.0)) < 0.02);
  }
  SUBCASE("deterministic under a fixed stream") {
    Rng r1(43, 9), r2(43, 9);
    for (int i = 0; i < 50; ++i)
      CHECK(update_xi(5.0, 2.0, 1.0, r1) == update_xi(5.0, 2.0, 1.0, r2));
  }
}

namespace {

FactorState make_factor_state(const SplineBasis& basis, const MatrixXd& f_init) {
  FactorState st;
  st.F = orthonormalize(f_init);
  st.Psi = basis.B.colPivHouseholderQr().solve(st.F);
  st.lambda_f = VectorXd::Ones(f_init.cols());
  return st;
}

}  // namespace

TEST_CASE("backfit_factors") {
  const int m = 30, n = 40;
  const SplineBasis basis = build_spline_basis(VectorXd::LinSpaced(m, 0.0, 1.0), 10);

  SUBCASE("huge smoothing parameter forces a straight line") {
    Rng rng(51, 0);
    // curved single-factor data
    VectorXd f_true(m);
    for (int j = 0; j < m; ++j)
      f_true[j] = std::sin(2.0 * M_PI * j / (m - 1.0));
    MatrixXd beta(n, 1);
    for (int i = 0; i < n; ++i) beta(i, 0) = 2.0 + rng.normal();
    MatrixXd data = beta * f_true.transpose();
    FactorState st = make_factor_state(basis, f_true);
    st.lambda_f[0] = 1e8;
    // single sweep with the pinned lambda; lambda is resampled afterwards
    MatrixXd beta_run = beta;
    backfit_factors(data, beta_run, basis, st, 1.0, rng);
    // residual from the best linear fit, relative to the column norm
    MatrixXd lin(m, 2);
    lin.col(0).setOnes();
    lin.col(1) = VectorXd::LinSpaced(m, 0.0, 1.0);
    const VectorXd fitted = lin * (lin.colPivHouseholderQr().solve(st.F.col(0)));
    CHECK((st.F.col(0) - fitted).norm() / st.F.col(0).norm() < 1e-3);
  }

  SUBCASE("noiseless subspace recovery") {
    Rng rng(52, 0);
    MatrixXd poly(m, 3);
    const VectorXd t = VectorXd::LinSpaced(m, 0.0, 1.0);
    poly.col(0).setOnes();
    poly.col(1) = t;
    poly.col(2) = t.array().square();
    const MatrixXd f_true = orthonormalize(poly).rightCols(2);
    MatrixXd beta_true(n, 2);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 2; ++k) beta_true(i, k) = 3.0 * rng.normal();
    const MatrixXd data = beta_true * f_true.transpose();

    // start from a perturbed basis
    MatrixXd f0 = f_true;
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < 2; ++k) f0(j, k) += 0.3 * rng.normal();
    FactorState st = make_factor_state(basis, f0);
    MatrixXd beta_run = data * st.F;
    for (int sweep = 0; sweep < 500; ++sweep) {
      backfit_factors(data, beta_run, basis, st, 0.05, rng);
      beta_run = data * st.F;
    }
    Eigen::JacobiSVD<MatrixXd> svd(f_true.transpose() * st.F);
    for (int k = 0; k < 2; ++k) {
      const double cosangle = std::min(1.0, svd.singularValues()[k]);
      CHECK(std::acos(cosangle) < 0.05);
    }
  }

  SUBCASE("orthonormalization compensation keeps the fitted surface") {
    Rng rng(53, 0);
    MatrixXd f_raw(m, 3);
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < 3; ++k) f_raw(j, k) = rng.normal();
    MatrixXd beta(n, 3);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k) beta(i, k) = rng.normal();
    const MatrixXd surface = beta * f_raw.transpose();
    const auto res = orthonormalize_with_transform(f_raw);
    const MatrixXd beta2 = beta * res.T.transpose();
    CHECK((beta2 * res.Q.transpose() - surface).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("factors stay orthonormal after a sweep") {
    Rng rng(54, 0);
    MatrixXd data(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) data(i, j) = rng.normal();
    MatrixXd f0(m, 2);
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < 2; ++k) f0(j, k) = rng.normal();
    FactorState st = make_factor_state(basis, f0);
    MatrixXd beta = data * st.F;
    backfit_factors(data, beta, basis, st, 0.7, rng);
    CHECK((st.F.transpose() * st.F - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-8);
    CHECK((basis.B * st.Psi - st.F).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("ffbs filter and draws") {
  SUBCASE("phi = 0 reduces to the conjugate posterior") {
    const VectorXd y = (VectorXd(4) << 1.2, -0.4, 0.8, 2.0).finished();
    const double v = 0.5;
    VectorXd w = VectorXd::Constant(4, 0.9);
    const auto filt = ffbs_filter(y, v, 0.0, w, 0.9);
    for (int i = 0; i < 4; ++i) {
      const double prec = 1.0 / 0.9 + 1.0 / v;
      const double post_var = 1.0 / prec;
      const double post_mean = post_var * (y[i] / v);
      CHECK(filt.mean[i] == doctest::Approx(post_mean).epsilon(1e-10));
      CHECK(filt.var[i] == doctest::Approx(post_var).epsilon(1e-10));
    }
  }

  SUBCASE("huge observation noise returns the prior") {
    Rng rng(61, 0);
    DynamicCoefficients dyn = DynamicCoefficients::make(6, 1);
    dyn.mu[0] = 3.0;
    dyn.phi[0] = 0.5;
    MatrixXd projected = MatrixXd::Zero(6, 1);
    const int reps = 4000;
    double mean = 0.0;
    for (int repetition = 0; repetition < reps; ++repetition) {
      const MatrixXd draw = ffbs_coefficients(projected, dyn, 1e6, rng);
      mean += draw.col(0).mean();
    }
    mean /= reps;
    // stationary sd 1/sqrt(1-0.25); 6 correlated states per draw
    const double se = std::sqrt(1.0 / 0.75 / reps);
    CHECK(std::fabs(mean - 3.0) < 4.0 * se);
  }

  SUBCASE("posterior mean tracks the Kalman smoother") {
    Rng rng(62, 0);
    const int n = 200;
    const double phi = 0.8, sigma_eta = 0.6, obs_sd = 0.5;
    VectorXd truth(n), y(n);
    truth[0] = rng.normal(0.0, 1.0);
    for (int i = 1; i < n; ++i) truth[i] = phi * truth[i - 1] + rng.normal(0.0, sigma_eta);
    for (int i = 0; i < n; ++i) y[i] = truth[i] + rng.normal(0.0, obs_sd);

    const auto smooth = oracles::kalman_smoother(y, obs_sd * obs_sd, phi,
                                                 sigma_eta * sigma_eta, 1.0);
    const VectorXd w = VectorXd::Constant(n, sigma_eta * sigma_eta);
    VectorXd mean = VectorXd::Zero(n);
    const int draws = 2000;
    for (int d = 0; d < draws; ++d)
      mean += ffbs_scalar_draw(y, obs_sd * obs_sd, phi, w, 1.0, rng);
    mean /= draws;

    const double mse_ffbs = (mean - truth).squaredNorm() / n;
    const double mse_smoother = (smooth.mean - truth).squaredNorm() / n;
    CHECK(mse_ffbs <= 1.1 * mse_smoother);
  }

  SUBCASE("3-step joint distribution is exact") {
    Rng rng(63, 0);
    const VectorXd y = (VectorXd(3) << 0.3, -0.5, 1.0).finished();
    const double v = 0.5, phi = 0.7, w = 0.4;
    const double p1 = w / (1.0 - phi * phi);
    const auto joint = oracles::state_space_joint(y, v, phi, w, p1);

    const int n_draws = 100000;
    MatrixXd draws(n_draws, 3);
    const VectorXd wv = VectorXd::Constant(3, w);
    for (int d = 0; d < n_draws; ++d)
      draws.row(d) = ffbs_scalar_draw(y, v, phi, wv, p1, rng).transpose();
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    MatrixXd centered = draws.rowwise() - mean;
    const MatrixXd cov = centered.transpose() * centered / (n_draws - 1.0);
    for (int i = 0; i < 3; ++i) {
      const double se = std::sqrt(joint.cov(i, i) / n_draws);
      CHECK(std::fabs(mean[i] - joint.mean[i]) < 4.0 * se);
      for (int j = 0; j < 3; ++j) {
        const double se_cov = std::sqrt((joint.cov(i, i) * joint.cov(j, j) +
                                         joint.cov(i, j) * joint.cov(i, j)) /
                                        n_draws);
        CHECK(std::fabs(cov(i, j) - joint.cov(i, j)) < 4.0 * se_cov);
      }
    }
  }

  SUBCASE("invalid variances") {
    CHECK_THROWS_AS(ffbs_filter(VectorXd::Zero(3), 0.0, 0.5,
                                VectorXd::Ones(3), 1.0),
                    InvalidStateError);
  }
}

TEST_CASE("update_ar_params") {
  SUBCASE("prior-only phi matches Beta(5,2)") {
    Rng rng(71, 0);
    DynamicCoefficients dyn = DynamicCoefficients::make(0, 1);
    ArUpdateOptions opts;
    opts.update_hyper_a = false;
    std::vector<double> phis;
    const MatrixXd empty(0, 1);
    for (int it = 0; it < 20000; ++it) {
      update_ar_params(empty, dyn, rng, opts);
      phis.push_back(dyn.phi[0]);
    }
    CHECK(std::fabs(oracles::mean_of(phis) - 3.0 / 7.0) < 0.02);
  }

  SUBCASE("MGP keeps innovation variances stochastically ordered") {
    Rng rng(72, 0);
    DynamicCoefficients dyn = DynamicCoefficients::make(0, 4);
    dyn.a_eta1 = 3.0;
    dyn.a_eta2 = 3.0;
    ArUpdateOptions opts;
    opts.update_hyper_a = false;
    opts.update_phi = false;
    opts.update_mu = false;
    const MatrixXd empty(0, 4);
    VectorXd mean_s2 = VectorXd::Zero(4);
    const int reps = 10000;
    for (int it = 0; it < reps; ++it) {
      update_ar_params(empty, dyn, rng, opts);
      mean_s2 += dyn.sigma_eta_sq();
    }
    mean_s2 /= reps;
    for (int k = 1; k < 4; ++k) CHECK(mean_s2[k] < mean_s2[k - 1]);
  }

  SUBCASE("phi recovery on a long synthetic series") {
    Rng rng(73, 0);
    const int n = 200;
    MatrixXd series(n, 1);
    const double phi_true = 0.8, sigma_eta = 0.6, mu_true = 1.0;
    series(0, 0) = mu_true + rng.normal(0.0, 1.0);
    for (int i = 1; i < n; ++i)
      series(i, 0) =
          mu_true + phi_true * (series(i - 1, 0) - mu_true) + rng.normal(0.0, sigma_eta);
    DynamicCoefficients dyn = DynamicCoefficients::make(n, 1);
    double mean_phi = 0.0;
    const int iters = 3000, burn = 500;
    for (int it = 0; it < iters; ++it) {
      update_ar_params(series, dyn, rng);
      if (it >= burn) mean_phi += dyn.phi[0];
    }
    mean_phi /= (iters - burn);
    CHECK(std::fabs(mean_phi - phi_true) < 0.15);
  }
}

TEST_CASE("update_regression") {
  SUBCASE("zero design leaves alpha at its prior; scales stay positive") {
    Rng rng(81, 0);
    const int n = 30, p = 2, kk = 2;
    DynamicCoefficients dyn = DynamicCoefficients::make(n, kk);
    RegressionBlock reg = RegressionBlock::make(MatrixXd::Zero(n, p), kk);
    MatrixXd projected(n, kk);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < kk; ++k) projected(i, k) = rng.normal();
    std::vector<double> abs_alpha;
    for (int it = 0; it < 10000; ++it) {
      update_regression(projected, reg, dyn, 1.0, rng);
      update_ar_params(dyn.beta - reg.X * reg.alpha, dyn, rng);
      REQUIRE(reg.hs_local.minCoeff() > 0.0);
      REQUIRE(reg.hs_mid.minCoeff() > 0.0);
      REQUIRE(reg.hs_global > 0.0);
      if (it >= 1000) abs_alpha.push_back(std::fabs(reg.alpha(0, 0)));
    }
    std::sort(abs_alpha.begin(), abs_alpha.end());
    const double chain_median = abs_alpha[abs_alpha.size() / 2];

    // independent prior oracle: forward-sample the nested half-Cauchy
    // hierarchy and the coefficient
    Rng prior_rng(82, 0);
    std::vector<double> prior_abs;
    for (int it = 0; it < 20000; ++it) {
      const double c = prior_rng.inverse_gamma(0.5, static_cast<double>(p));
      const double l0 = std::sqrt(prior_rng.inverse_gamma(0.5, 1.0 / c));
      const double b = prior_rng.inverse_gamma(0.5, 1.0 / (l0 * l0));
      const double lj = std::sqrt(prior_rng.inverse_gamma(0.5, 1.0 / b));
      const double a = prior_rng.inverse_gamma(0.5, 1.0 / (lj * lj));
      const double sj = std::sqrt(prior_rng.inverse_gamma(0.5, 1.0 / a));
      prior_abs.push_back(std::fabs(prior_rng.normal(0.0, sj)));
    }
    std::sort(prior_abs.begin(), prior_abs.end());
    const double prior_median = prior_abs[prior_abs.size() / 2];
    CHECK(chain_median == doctest::Approx(prior_median).epsilon(0.25));
  }

  SUBCASE("strong single-predictor signal is recovered") {
    Rng rng(83, 0);
    const int n = 150, kk = 1;
    MatrixXd x(n, 1);
    for (int i = 0; i < n; ++i) x(i, 0) = rng.normal();
    const double alpha_true = 5.0;
    MatrixXd projected(n, kk);
    for (int i = 0; i < n; ++i)
      projected(i, 0) = 0.5 + alpha_true * x(i, 0) + rng.normal(0.0, 0.05);

    DynamicCoefficients dyn = DynamicCoefficients::make(n, kk);
    dyn.mu[0] = 0.5;
    RegressionBlock reg = RegressionBlock::make(x, kk);
    double mean_alpha = 0.0;
    const int iters = 2000, burn = 500;
    for (int it = 0; it < iters; ++it) {
      update_regression(projected, reg, dyn, 0.05, rng);
      update_ar_params(dyn.beta - reg.X * reg.alpha, dyn, rng);
      if (it >= burn) mean_alpha += reg.alpha(0, 0);
    }
    mean_alpha /= (iters - burn);
    CHECK(std::fabs(mean_alpha - alpha_true) < 0.2);
  }
}

TEST_CASE("covariance evaluators") {
  const int m = 5;
  MatrixXd f = MatrixXd::Constant(m, 1, 1.0 / std::sqrt(static_cast<double>(m)));

  SUBCASE("contemporaneous plug-ins") {
    MatrixXd cov_beta = MatrixXd::Identity(1, 1);
    CHECK(contemporaneous_cov(f, cov_beta, 0.0, 0, 1) ==
          doctest::Approx(1.0 / m));
    CHECK(contemporaneous_cov(f, cov_beta, 0.3, 2, 2) ==
          doctest::Approx(1.0 / m + 0.09));
  }

  SUBCASE("lag plug-ins and geometric decay") {
    const VectorXd phi = VectorXd::Constant(1, 0.8);
    const VectorXd sigma_eta = VectorXd::Constant(1, 0.6);
    CHECK(lag_cov_ar(f, phi, sigma_eta, 1, 2, 2) == doctest::Approx(0.8 / m));
    for (int lag = 1; lag < 6; ++lag) {
      const double ratio = lag_cov_ar(f, phi, sigma_eta, lag + 1, 1, 3) /
                           lag_cov_ar(f, phi, sigma_eta, lag, 1, 3);
      CHECK(ratio == doctest::Approx(0.8).epsilon(1e-10));
    }
  }

  SUBCASE("Monte Carlo agreement on a small generative model") {
    Rng rng(91, 0);
    const int mm = 4;
    MatrixXd poly(mm, 2);
    poly.col(0).setOnes();
    poly.col(1) = VectorXd::LinSpaced(mm, 0.0, 1.0);
    const MatrixXd ff = orthonormalize(poly);
    const VectorXd phi = (VectorXd(2) << 0.7, -0.4).finished();
    const VectorXd sigma_eta = (VectorXd(2) << 0.5, 0.8).finished();
    const double sigma_eps = 0.3;

    const int reps = 200000;
    // contemporaneous covariance between grid points 0 and 2
    std::vector<double> a(reps), b(reps);
    for (int rep = 0; rep < reps; ++rep) {
      double t0 = 0.0, t2 = 0.0;
      for (int k = 0; k < 2; ++k) {
        const double stat_sd =
            sigma_eta[k] / std::sqrt(1.0 - phi[k] * phi[k]);
        const double beta = rng.normal(0.0, stat_sd);
        t0 += ff(0, k) * beta;
        t2 += ff(2, k) * beta;
      }
      a[rep] = t0 + sigma_eps * rng.normal();
      b[rep] = t2 + sigma_eps * rng.normal();
    }
    const double ma = oracles::mean_of(a), mb = oracles::mean_of(b);
    double cov = 0.0;
    for (int rep = 0; rep < reps; ++rep) cov += (a[rep] - ma) * (b[rep] - mb);
    cov /= (reps - 1.0);
    MatrixXd cov_beta = MatrixXd::Zero(2, 2);
    for (int k = 0; k < 2; ++k)
      cov_beta(k, k) = sigma_eta[k] * sigma_eta[k] / (1.0 - phi[k] * phi[k]);
    const double expected = contemporaneous_cov(ff, cov_beta, sigma_eps, 0, 2);
    const double se = std::sqrt(2.0 / reps) *
                      (std::sqrt(cov_beta(0, 0) + cov_beta(1, 1)) + sigma_eps);
    CHECK(std::fabs(cov - expected) < 4.0 * se);
  }

  SUBCASE("input validation") {
    CHECK_THROWS_AS(contemporaneous_cov(f, MatrixXd::Identity(2, 2), 0.1, 0, 0),
                    InvalidInputError);
    CHECK_THROWS_AS(
        lag_cov_ar(f, VectorXd::Constant(1, 0.5), VectorXd::Constant(1, 1.0), 0, 0, 0),
        InvalidParameterError);
  }
}
