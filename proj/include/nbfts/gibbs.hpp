#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nbfts/latent_model.hpp"
#include "nbfts/panel.hpp"

namespace nbfts {

enum class Variant { NB, Pois, Gauss };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct FitConfig {
  int K = 6;
  int iterations = 30000;
  int burn_in = 5000;
  int thin = 5;
  Variant variant = Variant::NB;
  std::optional<double> r_fixed;  // Pois defaults to 1000 when unset
  int L_m = 0;                    // 0 -> default_basis_size(m)
  std::uint64_t seed = 0;
  std::optional<Eigen::MatrixXd> regression_design;  // n x p

  // Engine tuning for the per-cell PG refresh: shapes are z + r, so the
  // chain spends most of its time far above 1 where the moment-matched
  // branches are indistinguishable from exact draws (checked against the
  // quadrature oracle) and orders of magnitude cheaper.
  PgTuning pg{/*gauss_threshold=*/48.0, /*max_exact=*/8, /*series_terms=*/16};
  double lambda_f_prior_shape = 0.01;
  double lambda_f_prior_rate = 0.01;
  double sigma_eps_prior_shape = 0.01;
  double sigma_eps_prior_rate = 0.01;
  double phi_prior_a = 5.0;
  double phi_prior_b = 2.0;
  double r_prior_scale = 10.0;  // half-Cauchy scale for the dispersion
  double r_init = 5.0;
  int threads = 0;  // 0 -> NBFTS_THREADS environment variable, else 1

  void validate() const;
  std::optional<double> effective_r_fixed() const;
  int stored_draws() const { return (iterations - burn_in) / thin; }
};

struct StoredDraw {
  Eigen::MatrixXd F;     // m x K
  Eigen::MatrixXd beta;  // n x K
  Eigen::VectorXd mu, phi, sigma_eta, lambda_f;
  double sigma_eps = 1.0;
  double r = 0.0;         // NaN for the Gauss variant
  Eigen::MatrixXd alpha;  // p x K, empty when no regression design
};

struct DrawStore {
  Variant variant = Variant::NB;
  int n = 0, m = 0, K = 0;
  std::uint64_t seed = 0;
  int iterations = 0, burn_in = 0, thin = 0;

  std::vector<StoredDraw> states;
  // One posterior-predictive count draw per stored state; observed cells
  // carry their observed value, unobserved cells an imputation.
  std::vector<CountMatrix> predictive;
  MaskMatrix observed;

  // Mean over stored draws of exp(theta) and of the marginalized conditional
  // mean exp(log E + mu) exp(sigma_eps^2 / 2) (NB/Pois variants).
  Eigen::MatrixXd mean_exp_theta;
  Eigen::MatrixXd mean_cond_formula;

  double ess_r = 0.0;
  double ess_sigma_eps = 0.0;

  int stored() const { return static_cast<int>(states.size()); }
};

// Full Gibbs sampler over a count panel (NB/Pois variants) or the Gaussian
// functional model on sqrt(Z/E) (Gauss variant).
DrawStore fit(const CountPanel& panel, const FitConfig& cfg);

// Convenience wrapper forcing the Gauss variant.
DrawStore fit_gauss(const CountPanel& panel, FitConfig cfg);

// sqrt(Z/E) with NaN at missing cells; the Gauss variant's input surface.
Eigen::MatrixXd gauss_input_surface(const CountPanel& panel);

std::vector<std::vector<long long>> posterior_predictive_cells(
    const DrawStore& store, const std::vector<std::pair<int, int>>& cells);

struct PredictiveSummary {
  double point;
  long long lower, upper;
};

// point = mean of the draws, interval = equal-tailed empirical quantiles
// (interpolated, rounded outward to integers).
PredictiveSummary predictive_summary(const std::vector<long long>& draws,
                                     double level);

// Interpolated (type-7) empirical quantile; sorts a copy.
double quantile_interpolated(std::vector<double> values, double q);

// Initial-positive-sequence autocorrelation estimator.
double effective_sample_size(const std::vector<double>& chain);

}  // namespace nbfts
