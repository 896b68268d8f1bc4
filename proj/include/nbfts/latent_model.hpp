#pragma once

#include <Eigen/Dense>
#include <optional>

#include "nbfts/basis.hpp"
#include "nbfts/count_core.hpp"
#include "nbfts/rng.hpp"

namespace nbfts {

// Latent Gaussian layer for one chain: theta includes the log offset, xi are
// the Polya-Gamma auxiliaries.
struct LatentField {
  Eigen::MatrixXd theta;        // n x m
  Eigen::MatrixXd xi;           // n x m, > 0
  Eigen::MatrixXd offsets_log;  // n x m
  double sigma_eps = 1.0;
};

// AR(1) coefficient layer with multiplicative-gamma ordered shrinkage and
// heavy-tailed local scales on the innovations.
struct DynamicCoefficients {
  Eigen::MatrixXd beta;       // n x K
  Eigen::VectorXd mu;         // K
  Eigen::VectorXd phi;        // K, |phi_k| < 1
  Eigen::VectorXd delta_mu;   // K MGP increments, sigma_mu_k^{-2} = prod_{l<=k}
  Eigen::VectorXd delta_eta;  // K MGP increments for innovation precisions
  Eigen::MatrixXd xi_eta;     // n x K local innovation scales, > 0
  double nu_eta = 10.0;       // local-scale shape, in [2, 128]
  double a_mu1 = 2.0, a_mu2 = 2.0, a_eta1 = 2.0, a_eta2 = 2.0;

  int num_factors() const { return static_cast<int>(mu.size()); }
  Eigen::VectorXd sigma_mu_sq() const;
  Eigen::VectorXd sigma_eta_sq() const;

  static DynamicCoefficients make(int n, int k);
};

// Function-on-scalars regression layer with nested horseshoe shrinkage.
struct RegressionBlock {
  Eigen::MatrixXd X;        // n x p
  Eigen::MatrixXd alpha;    // p x K
  Eigen::MatrixXd gamma;    // n x K AR residuals
  Eigen::MatrixXd hs_local; // p x K scales sigma_alpha
  Eigen::VectorXd hs_mid;   // p scales lambda_j
  double hs_global = 1.0;   // lambda_0
  // inverse-gamma auxiliaries of the half-Cauchy hierarchy
  Eigen::MatrixXd aux_local;
  Eigen::VectorXd aux_mid;
  double aux_global = 1.0;

  static RegressionBlock make(const Eigen::MatrixXd& X, int k);
};

// Z^PG pseudo-observation (Z - r) / (2 xi) + log r.
double compute_zpg(double z, double r, double xi);

struct ThetaCell {
  double z;           // count
  double r;           // dispersion
  double xi;          // PG auxiliary
  double mu;          // smooth mean, without offset
  double offset_log;  // log E
};

// Gaussian full-conditional draw of theta for one cell.
double update_theta(const ThetaCell& cell, double sigma_eps, Rng& rng);

// PG(z + r, theta - log r) refresh for one cell.
double update_xi(double z, double r, double theta, Rng& rng,
                 const PgTuning& tuning = PgTuning{});

// Unknown-basis state: evaluated factors, spline coefficients, smoothing.
struct FactorState {
  Eigen::MatrixXd F;         // m x K, F'F = I
  Eigen::MatrixXd Psi;       // L x K, F = B Psi
  Eigen::VectorXd lambda_f;  // K smoothing parameters
};

// One backfitting sweep over factors: draws each psi_k from its Gaussian
// full conditional given partial residuals of latent_data = beta F' + eps,
// updates lambda_f conjugately, then restores F'F = I, compensating beta so
// the fitted surface beta F' is unchanged.
void backfit_factors(const Eigen::MatrixXd& latent_data,  // n x m
                     Eigen::MatrixXd& beta,               // n x K, compensated
                     const SplineBasis& basis, FactorState& factors,
                     double sigma_eps, Rng& rng,
                     double lambda_prior_shape = 0.01,
                     double lambda_prior_rate = 0.01);

// Forward filter for a zero-mean AR(1) state observed with noise; exposed
// for verification of the FFBS draw.
struct FfbsFilter {
  Eigen::VectorXd mean, var;            // filtered
  Eigen::VectorXd pred_mean, pred_var;  // one-step predictive
};
FfbsFilter ffbs_filter(const Eigen::VectorXd& obs_centered, double obs_var,
                       double phi, const Eigen::VectorXd& innov_var,
                       double init_var);

// Joint draw of one zero-mean AR(1) state path by forward filtering and
// backward sampling.
Eigen::VectorXd ffbs_scalar_draw(const Eigen::VectorXd& obs_centered,
                                 double obs_var, double phi,
                                 const Eigen::VectorXd& innov_var,
                                 double init_var, Rng& rng);

// Per-factor FFBS of the coefficient paths given projected observations
// y_{k,i} = f_k' d_i with noise variance sigma_eps^2 (valid because
// F'F = I). Levels default to mu_k; a full n x K level matrix supports the
// regression extension.
Eigen::MatrixXd ffbs_coefficients(const Eigen::MatrixXd& projected,
                                  const DynamicCoefficients& dyn,
                                  double sigma_eps, Rng& rng,
                                  const std::optional<Eigen::MatrixXd>& levels =
                                      std::nullopt);

struct ArUpdateOptions {
  bool update_mu = true;
  bool update_phi = true;
  bool update_mgp = true;
  bool update_local_scales = true;
  bool update_nu = true;
  bool update_hyper_a = true;
  double phi_prior_a = 5.0;  // (phi+1)/2 ~ Beta(a, b)
  double phi_prior_b = 2.0;
};

// Draws mu_k, phi_k, the MGP increments and hyperparameters, the local
// innovation scales, and nu_eta given the coefficient series. An empty
// series (0 rows) yields prior draws.
void update_ar_params(const Eigen::MatrixXd& series, DynamicCoefficients& dyn,
                      Rng& rng, const ArUpdateOptions& opts = ArUpdateOptions{});

// Regression sweep: draws beta via FFBS around levels mu + X alpha, then
// alpha from its AR-whitened Gaussian full conditional under the horseshoe
// scales, resets gamma = beta - mu - X alpha, and refreshes all half-Cauchy
// scales through their inverse-gamma auxiliaries.
void update_regression(const Eigen::MatrixXd& projected, RegressionBlock& reg,
                       DynamicCoefficients& dyn, double sigma_eps, Rng& rng);

// Cov[theta_i(tau), theta_i(u)] = f(tau)' Cov(beta) f(u) + 1{tau=u} sigma_eps^2.
double contemporaneous_cov(const Eigen::MatrixXd& F,
                           const Eigen::MatrixXd& cov_beta, double sigma_eps,
                           int tau_idx, int u_idx);

// Lag-l autocovariance under stationary AR(1) coefficients:
// sum_k f_k(tau) f_k(u) phi_k^l sigma_eta_k^2 / (1 - phi_k^2).
double lag_cov_ar(const Eigen::MatrixXd& F, const Eigen::VectorXd& phi,
                  const Eigen::VectorXd& sigma_eta, int lag, int tau_idx,
                  int u_idx);

}  // namespace nbfts
