#include "nbfts/latent_model.hpp"

#include <cmath>

#include "nbfts/error.hpp"

namespace nbfts {

namespace {

constexpr double kPhiSqFloor = 1e-6;  // floor on 1 - phi^2 near the unit root

double gamma_logpdf_rate1(double x, double shape) {
  return (shape - 1.0) * std::log(x) - x - std::lgamma(shape);
}

}  // namespace

Eigen::VectorXd DynamicCoefficients::sigma_mu_sq() const {
  Eigen::VectorXd out(delta_mu.size());
  double prod = 1.0;
  for (int k = 0; k < delta_mu.size(); ++k) {
    prod *= delta_mu[k];
    out[k] = 1.0 / prod;
  }
  return out;
}

Eigen::VectorXd DynamicCoefficients::sigma_eta_sq() const {
  Eigen::VectorXd out(delta_eta.size());
  double prod = 1.0;
  for (int k = 0; k < delta_eta.size(); ++k) {
    prod *= delta_eta[k];
    out[k] = 1.0 / prod;
  }
  return out;
}

DynamicCoefficients DynamicCoefficients::make(int n, int k) {
  DynamicCoefficients dyn;
  dyn.beta = Eigen::MatrixXd::Zero(n, k);
  dyn.mu = Eigen::VectorXd::Zero(k);
  dyn.phi = Eigen::VectorXd::Zero(k);
  dyn.delta_mu = Eigen::VectorXd::Ones(k);
  dyn.delta_eta = Eigen::VectorXd::Ones(k);
  dyn.xi_eta = Eigen::MatrixXd::Ones(n, k);
  return dyn;
}

RegressionBlock RegressionBlock::make(const Eigen::MatrixXd& X, int k) {
  RegressionBlock reg;
  const int p = static_cast<int>(X.cols());
  reg.X = X;
  reg.alpha = Eigen::MatrixXd::Zero(p, k);
  reg.gamma = Eigen::MatrixXd::Zero(X.rows(), k);
  reg.hs_local = Eigen::MatrixXd::Ones(p, k);
  reg.hs_mid = Eigen::VectorXd::Ones(p);
  reg.aux_local = Eigen::MatrixXd::Ones(p, k);
  reg.aux_mid = Eigen::VectorXd::Ones(p);
  return reg;
}

double compute_zpg(double z, double r, double xi) {
  if (!(xi > 0.0)) throw InvalidStateError("compute_zpg: xi must be positive");
  if (!(r > 0.0)) throw InvalidStateError("compute_zpg: r must be positive");
  return (z - r) / (2.0 * xi) + std::log(r);
}

double update_theta(const ThetaCell& cell, double sigma_eps, Rng& rng) {
  if (!(cell.xi > 0.0) || !(sigma_eps > 0.0))
    throw InvalidStateError("update_theta: nonpositive precision inputs");
  const double zpg = compute_zpg(cell.z, cell.r, cell.xi);
  const double prior_prec = 1.0 / (sigma_eps * sigma_eps);
  const double q = cell.xi + prior_prec;
  const double lin = cell.xi * zpg + prior_prec * (cell.mu + cell.offset_log);
  return rng.normal(lin / q, std::sqrt(1.0 / q));
}

double update_xi(double z, double r, double theta, Rng& rng, const PgTuning& tuning) {
  if (!(z + r > 0.0)) throw InvalidStateError("update_xi: z + r must be positive");
  return sample_polya_gamma(z + r, theta - std::log(r), rng, tuning);
}

void backfit_factors(const Eigen::MatrixXd& latent_data, Eigen::MatrixXd& beta,
                     const SplineBasis& basis, FactorState& factors,
                     double sigma_eps, Rng& rng, double lambda_prior_shape,
                     double lambda_prior_rate) {
  const int k_total = static_cast<int>(factors.F.cols());
  const int l = basis.num_columns();
  const int m = basis.num_points();
  if (latent_data.cols() != m || beta.cols() != k_total ||
      latent_data.rows() != beta.rows())
    throw InvalidInputError("backfit_factors: dimension mismatch");
  const double obs_prec = 1.0 / (sigma_eps * sigma_eps);
  const Eigen::MatrixXd btb = basis.B.transpose() * basis.B;

  for (int k = 0; k < k_total; ++k) {
    const double bsq = beta.col(k).squaredNorm();
    // partial-residual cross product: (D - sum_{j != k} beta_j f_j')' beta_k
    const Eigen::VectorXd cross = beta.transpose() * beta.col(k);
    Eigen::VectorXd resid_tb = latent_data.transpose() * beta.col(k);
    resid_tb.noalias() -= factors.F * cross;
    resid_tb.noalias() += factors.F.col(k) * bsq;

    Eigen::MatrixXd prec = (obs_prec * bsq) * btb + factors.lambda_f[k] * basis.Omega;
    prec.diagonal().array() += 1e-10;
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
      throw DegenerateBasisError("backfit_factors: singular full-conditional precision");
    const Eigen::VectorXd mean =
        llt.solve(obs_prec * (basis.B.transpose() * resid_tb));
    Eigen::VectorXd noise(l);
    for (int j = 0; j < l; ++j) noise[j] = rng.normal();
    const Eigen::VectorXd psi =
        mean + llt.matrixU().solve(noise);
    factors.Psi.col(k) = psi;
    factors.F.col(k) = basis.B * psi;

    const double quad = psi.dot(basis.Omega * psi);
    factors.lambda_f[k] = rng.gamma(lambda_prior_shape + 0.5 * basis.penalty_rank,
                                    lambda_prior_rate + 0.5 * quad);
  }

  OrthonormalizedFactors ortho = orthonormalize_with_transform(factors.F);
  factors.F = ortho.Q;
  beta = beta * ortho.T.transpose();
  factors.Psi = factors.Psi * ortho.T.inverse();
}

FfbsFilter ffbs_filter(const Eigen::VectorXd& obs_centered, double obs_var,
                       double phi, const Eigen::VectorXd& innov_var,
                       double init_var) {
  const int n = static_cast<int>(obs_centered.size());
  if (!(obs_var > 0.0) || !(init_var > 0.0))
    throw InvalidStateError("ffbs_filter: variances must be positive");
  FfbsFilter f;
  f.mean.resize(n);
  f.var.resize(n);
  f.pred_mean.resize(n);
  f.pred_var.resize(n);
  for (int i = 0; i < n; ++i) {
    if (i == 0) {
      f.pred_mean[i] = 0.0;
      f.pred_var[i] = init_var;
    } else {
      if (!(innov_var[i] > 0.0))
        throw InvalidStateError("ffbs_filter: innovation variance must be positive");
      f.pred_mean[i] = phi * f.mean[i - 1];
      f.pred_var[i] = phi * phi * f.var[i - 1] + innov_var[i];
    }
    const double gain = f.pred_var[i] / (f.pred_var[i] + obs_var);
    f.mean[i] = f.pred_mean[i] + gain * (obs_centered[i] - f.pred_mean[i]);
    f.var[i] = (1.0 - gain) * f.pred_var[i];
  }
  return f;
}

Eigen::VectorXd ffbs_scalar_draw(const Eigen::VectorXd& obs_centered,
                                 double obs_var, double phi,
                                 const Eigen::VectorXd& innov_var,
                                 double init_var, Rng& rng) {
  const int n = static_cast<int>(obs_centered.size());
  const FfbsFilter f = ffbs_filter(obs_centered, obs_var, phi, innov_var, init_var);
  Eigen::VectorXd draw(n);
  draw[n - 1] = rng.normal(f.mean[n - 1], std::sqrt(f.var[n - 1]));
  for (int i = n - 2; i >= 0; --i) {
    const double carry = f.var[i] * phi / f.pred_var[i + 1];
    const double mean = f.mean[i] + carry * (draw[i + 1] - f.pred_mean[i + 1]);
    const double var = f.var[i] - carry * phi * f.var[i];
    draw[i] = rng.normal(mean, std::sqrt(var > 0.0 ? var : 0.0));
  }
  return draw;
}

Eigen::MatrixXd ffbs_coefficients(const Eigen::MatrixXd& projected,
                                  const DynamicCoefficients& dyn,
                                  double sigma_eps, Rng& rng,
                                  const std::optional<Eigen::MatrixXd>& levels) {
  const int n = static_cast<int>(projected.rows());
  const int kk = static_cast<int>(projected.cols());
  if (kk != dyn.num_factors())
    throw InvalidInputError("ffbs_coefficients: factor count mismatch");
  const Eigen::VectorXd s2_eta = dyn.sigma_eta_sq();
  const double obs_var = sigma_eps * sigma_eps;
  Eigen::MatrixXd out(n, kk);
  for (int k = 0; k < kk; ++k) {
    if (!(std::fabs(dyn.phi[k]) < 1.0))
      throw InvalidStateError("ffbs_coefficients: |phi| must be < 1");
    Eigen::VectorXd centered(n), innov_var(n);
    for (int i = 0; i < n; ++i) {
      const double level = levels ? (*levels)(i, k) : dyn.mu[k];
      centered[i] = projected(i, k) - level;
      innov_var[i] = s2_eta[k] / dyn.xi_eta(i, k);
    }
    const double one_minus = std::max(1.0 - dyn.phi[k] * dyn.phi[k], kPhiSqFloor);
    const Eigen::VectorXd path = ffbs_scalar_draw(centered, obs_var, dyn.phi[k],
                                                  innov_var, s2_eta[k] / one_minus, rng);
    for (int i = 0; i < n; ++i) {
      const double level = levels ? (*levels)(i, k) : dyn.mu[k];
      out(i, k) = path[i] + level;
    }
  }
  return out;
}

namespace {

// Sum of scaled squared innovations entering the MGP update, plus terms for
// the mu and phi conditionals.
struct ArSuffStats {
  double sse = 0.0;  // (x0-mu)^2 (1-phi^2) + sum_i xi_i eta_i^2
};

ArSuffStats ar_scaled_sse(const Eigen::VectorXd& x, double mu, double phi,
                          const Eigen::MatrixXd& xi_eta, int k) {
  ArSuffStats s;
  const int n = static_cast<int>(x.size());
  if (n == 0) return s;
  const double one_minus = std::max(1.0 - phi * phi, kPhiSqFloor);
  s.sse = (x[0] - mu) * (x[0] - mu) * one_minus;
  for (int i = 1; i < n; ++i) {
    const double e = (x[i] - mu) - phi * (x[i - 1] - mu);
    s.sse += xi_eta(i, k) * e * e;
  }
  return s;
}

}  // namespace

void update_ar_params(const Eigen::MatrixXd& series, DynamicCoefficients& dyn,
                      Rng& rng, const ArUpdateOptions& opts) {
  const int kk = dyn.num_factors();
  const int n = static_cast<int>(series.rows());
  if (n > 0 && series.cols() != kk)
    throw InvalidInputError("update_ar_params: series width mismatch");
  if (dyn.xi_eta.rows() != n || dyn.xi_eta.cols() != kk)
    dyn.xi_eta = Eigen::MatrixXd::Ones(n, kk);

  Eigen::VectorXd s2_mu = dyn.sigma_mu_sq();
  Eigen::VectorXd s2_eta = dyn.sigma_eta_sq();

  for (int k = 0; k < kk; ++k) {
    const double s2e = s2_eta[k];
    const double phi = dyn.phi[k];

    if (opts.update_mu) {
      double prec = 1.0 / s2_mu[k];
      double lin = 0.0;
      if (n > 0) {
        const double one_minus = std::max(1.0 - phi * phi, kPhiSqFloor);
        const double init_var = s2e / one_minus;
        prec += 1.0 / init_var;
        lin += series(0, k) / init_var;
        for (int i = 1; i < n; ++i) {
          const double w = dyn.xi_eta(i, k) / s2e;
          const double d = series(i, k) - phi * series(i - 1, k);
          prec += (1.0 - phi) * (1.0 - phi) * w;
          lin += (1.0 - phi) * w * d;
        }
      }
      dyn.mu[k] = rng.normal(lin / prec, std::sqrt(1.0 / prec));
    }

    if (opts.update_phi) {
      const double mu = dyn.mu[k];
      auto target = [&](double p) {
        double lp = (opts.phi_prior_a - 1.0) * std::log1p(p) +
                    (opts.phi_prior_b - 1.0) * std::log1p(-p);
        if (n > 0) {
          const double one_minus = std::max(1.0 - p * p, kPhiSqFloor);
          const double init_var = s2e / one_minus;
          const double d0 = series(0, k) - mu;
          lp += -0.5 * std::log(init_var) - 0.5 * d0 * d0 / init_var;
          for (int i = 1; i < n; ++i) {
            const double e = (series(i, k) - mu) - p * (series(i - 1, k) - mu);
            lp += -0.5 * dyn.xi_eta(i, k) * e * e / s2e;
          }
        }
        return lp;
      };
      dyn.phi[k] = slice_sample(target, dyn.phi[k], 0.2, rng, -1.0, 1.0);
    }
  }

  if (opts.update_local_scales && n > 0) {
    for (int k = 0; k < kk; ++k) {
      dyn.xi_eta(0, k) = rng.gamma(0.5 * dyn.nu_eta, 0.5 * dyn.nu_eta);
      for (int i = 1; i < n; ++i) {
        const double e = (series(i, k) - dyn.mu[k]) -
                         dyn.phi[k] * (series(i - 1, k) - dyn.mu[k]);
        dyn.xi_eta(i, k) = rng.gamma(0.5 * dyn.nu_eta + 0.5,
                                     0.5 * dyn.nu_eta + 0.5 * e * e / s2_eta[k]);
      }
    }
  }

  if (opts.update_mgp) {
    // innovation precisions
    Eigen::VectorXd sse(kk);
    for (int k = 0; k < kk; ++k)
      sse[k] = ar_scaled_sse(n > 0 ? series.col(k) : Eigen::VectorXd(),
                             dyn.mu[k], dyn.phi[k], dyn.xi_eta, k).sse;
    for (int l = 0; l < kk; ++l) {
      const double a = (l == 0) ? dyn.a_eta1 : dyn.a_eta2;
      double rate = 1.0;
      double prod = 1.0;
      for (int k = 0; k < kk; ++k) {
        prod *= (k == l) ? 1.0 : dyn.delta_eta[k];
        if (k >= l) rate += 0.5 * prod * sse[k];
      }
      dyn.delta_eta[l] = rng.gamma(a + 0.5 * n * (kk - l), rate);
    }
    // level precisions
    for (int l = 0; l < kk; ++l) {
      const double a = (l == 0) ? dyn.a_mu1 : dyn.a_mu2;
      double rate = 1.0;
      double prod = 1.0;
      for (int k = 0; k < kk; ++k) {
        prod *= (k == l) ? 1.0 : dyn.delta_mu[k];
        if (k >= l) rate += 0.5 * prod * dyn.mu[k] * dyn.mu[k];
      }
      dyn.delta_mu[l] = rng.gamma(a + 0.5 * (kk - l), rate);
    }
  }

  if (opts.update_nu) {
    const int count = static_cast<int>(dyn.xi_eta.size());
    double sum_log = 0.0, sum_val = 0.0;
    for (int k = 0; k < kk; ++k)
      for (int i = 0; i < n; ++i) {
        sum_log += std::log(dyn.xi_eta(i, k));
        sum_val += dyn.xi_eta(i, k);
      }
    auto target = [&](double nu) {
      const double h = 0.5 * nu;
      return count * (h * std::log(h) - std::lgamma(h)) + (h - 1.0) * sum_log -
             h * sum_val;
    };
    dyn.nu_eta = slice_sample(target, dyn.nu_eta, 8.0, rng, 2.0, 128.0);
  }

  if (opts.update_hyper_a) {
    auto slice_log_a = [&](double current, auto&& loglik) {
      auto target = [&](double la) {
        const double a = std::exp(la);
        // Gamma(2,1) prior plus log-scale Jacobian
        return 2.0 * la - a + loglik(a);
      };
      return std::exp(slice_sample(target, std::log(current), 0.5, rng,
                                   -std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity()));
    };
    dyn.a_mu1 = slice_log_a(dyn.a_mu1, [&](double a) {
      return gamma_logpdf_rate1(dyn.delta_mu[0], a);
    });
    dyn.a_eta1 = slice_log_a(dyn.a_eta1, [&](double a) {
      return gamma_logpdf_rate1(dyn.delta_eta[0], a);
    });
    if (kk > 1) {
      dyn.a_mu2 = slice_log_a(dyn.a_mu2, [&](double a) {
        double s = 0.0;
        for (int l = 1; l < kk; ++l) s += gamma_logpdf_rate1(dyn.delta_mu[l], a);
        return s;
      });
      dyn.a_eta2 = slice_log_a(dyn.a_eta2, [&](double a) {
        double s = 0.0;
        for (int l = 1; l < kk; ++l) s += gamma_logpdf_rate1(dyn.delta_eta[l], a);
        return s;
      });
    } else {
      dyn.a_mu2 = slice_log_a(dyn.a_mu2, [](double) { return 0.0; });
      dyn.a_eta2 = slice_log_a(dyn.a_eta2, [](double) { return 0.0; });
    }
  }
}

void update_regression(const Eigen::MatrixXd& projected, RegressionBlock& reg,
                       DynamicCoefficients& dyn, double sigma_eps, Rng& rng) {
  const int n = static_cast<int>(projected.rows());
  const int kk = dyn.num_factors();
  const int p = static_cast<int>(reg.X.cols());
  if (reg.X.rows() != n)
    throw InvalidInputError("update_regression: design row mismatch");

  Eigen::MatrixXd levels(n, kk);
  for (int k = 0; k < kk; ++k)
    levels.col(k) = Eigen::VectorXd::Constant(n, dyn.mu[k]) + reg.X * reg.alpha.col(k);
  dyn.beta = ffbs_coefficients(projected, dyn, sigma_eps, rng, levels);

  const Eigen::VectorXd s2_eta = dyn.sigma_eta_sq();
  for (int k = 0; k < kk; ++k) {
    const double phi = dyn.phi[k];
    const double s2 = s2_eta[k];
    const double root = std::sqrt(std::max(1.0 - phi * phi, kPhiSqFloor));
    Eigen::VectorXd y = dyn.beta.col(k).array() - dyn.mu[k];

    Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd lin = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < n; ++i) {
      Eigen::RowVectorXd xrow;
      double yst, w;
      if (i == 0) {
        xrow = root * reg.X.row(0);
        yst = root * y[0];
        w = 1.0 / s2;
      } else {
        xrow = reg.X.row(i) - phi * reg.X.row(i - 1);
        yst = y[i] - phi * y[i - 1];
        w = dyn.xi_eta(i, k) / s2;
      }
      prec.noalias() += w * xrow.transpose() * xrow;
      lin.noalias() += w * xrow.transpose() * yst;
    }
    for (int j = 0; j < p; ++j)
      prec(j, j) += 1.0 / (reg.hs_local(j, k) * reg.hs_local(j, k));
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
      throw InvalidStateError("update_regression: singular coefficient precision");
    Eigen::VectorXd noise(p);
    for (int j = 0; j < p; ++j) noise[j] = rng.normal();
    reg.alpha.col(k) = llt.solve(lin) + llt.matrixU().solve(noise);
    reg.gamma.col(k) = y - reg.X * reg.alpha.col(k);
  }

  // nested half-Cauchy scales via inverse-gamma auxiliaries
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < kk; ++k) {
      const double a = reg.alpha(j, k);
      const double s2 = rng.inverse_gamma(1.0, 1.0 / reg.aux_local(j, k) + 0.5 * a * a);
      reg.hs_local(j, k) = std::sqrt(s2);
      reg.aux_local(j, k) = rng.inverse_gamma(
          1.0, 1.0 / s2 + 1.0 / (reg.hs_mid[j] * reg.hs_mid[j]));
    }
  }
  for (int j = 0; j < p; ++j) {
    double rate = 1.0 / reg.aux_mid[j];
    for (int k = 0; k < kk; ++k) rate += 1.0 / reg.aux_local(j, k);
    const double l2 = rng.inverse_gamma(0.5 * (kk + 1), rate);
    reg.hs_mid[j] = std::sqrt(l2);
    reg.aux_mid[j] = rng.inverse_gamma(
        1.0, 1.0 / l2 + 1.0 / (reg.hs_global * reg.hs_global));
  }
  {
    double rate = 1.0 / reg.aux_global;
    for (int j = 0; j < p; ++j) rate += 1.0 / reg.aux_mid[j];
    const double g2 = rng.inverse_gamma(0.5 * (p + 1), rate);
    reg.hs_global = std::sqrt(g2);
    reg.aux_global = rng.inverse_gamma(1.0, static_cast<double>(p) + 1.0 / g2);
  }
}

double contemporaneous_cov(const Eigen::MatrixXd& F,
                           const Eigen::MatrixXd& cov_beta, double sigma_eps,
                           int tau_idx, int u_idx) {
  if (cov_beta.rows() != F.cols() || cov_beta.cols() != F.cols())
    throw InvalidInputError("contemporaneous_cov: Cov(beta) must be K x K");
  if (tau_idx < 0 || u_idx < 0 || tau_idx >= F.rows() || u_idx >= F.rows())
    throw OutOfBoundsError("contemporaneous_cov: grid index out of range");
  double val = F.row(tau_idx) * cov_beta * F.row(u_idx).transpose();
  if (tau_idx == u_idx) val += sigma_eps * sigma_eps;
  return val;
}

double lag_cov_ar(const Eigen::MatrixXd& F, const Eigen::VectorXd& phi,
                  const Eigen::VectorXd& sigma_eta, int lag, int tau_idx,
                  int u_idx) {
  if (lag < 1) throw InvalidParameterError("lag_cov_ar: lag must be >= 1");
  if (tau_idx < 0 || u_idx < 0 || tau_idx >= F.rows() || u_idx >= F.rows())
    throw OutOfBoundsError("lag_cov_ar: grid index out of range");
  double sum = 0.0;
  for (int k = 0; k < F.cols(); ++k) {
    if (!(std::fabs(phi[k]) < 1.0))
      throw InvalidParameterError("lag_cov_ar: |phi| must be < 1");
    const double stat_var = sigma_eta[k] * sigma_eta[k] / (1.0 - phi[k] * phi[k]);
    sum += F(tau_idx, k) * F(u_idx, k) * std::pow(phi[k], lag) * stat_var;
  }
  return sum;
}

}  // namespace nbfts
