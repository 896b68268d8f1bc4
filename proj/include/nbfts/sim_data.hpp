#pragma once

#include <utility>

#include "nbfts/forecast.hpp"
#include "nbfts/panel.hpp"

namespace nbfts {

// Benchmark generator: n curves at m equally spaced points on [0,1], four
// orthonormal polynomial factors with AR(1) weights, negative-binomial
// counts, and a fraction of cells deleted at random.
struct SimConfig {
  int n = 50;
  int m = 50;
  int K_true = 4;
  double phi = 0.8;
  double rsnr = 10.0;
  double missing_frac = 0.10;
  double r = 1000.0;
  std::uint64_t seed = 0;
  // The AR innovation scale sqrt(1 - phi^2) is read as a variance, matching
  // the N(mean, variance) convention used throughout the model definitions;
  // flip to read it as a standard deviation (stationary variance 1) instead.
  bool innovation_value_is_sd = false;

  void validate() const;
};

struct SimTruth {
  Eigen::MatrixXd theta_star;   // n x m
  Eigen::MatrixXd mu_star;      // n x m
  Eigen::MatrixXd true_curves;  // n x m, exp(mu*) exp(sigma*^2/2)
  Eigen::MatrixXd f_star;       // m x K_true, orthonormal columns
  Eigen::MatrixXd beta_star;    // n x K_true
  double sigma_star = 0.0;
};

std::pair<CountPanel, SimTruth> simulate(const SimConfig& cfg);

// Train on years 1..n-1 plus the first 30 points of year n, forecast the
// remaining points.
ForecastTask forecast_task_for_sim(const CountPanel& panel);

}  // namespace nbfts
