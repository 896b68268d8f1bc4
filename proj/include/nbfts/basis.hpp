#pragma once

#include <Eigen/Dense>

namespace nbfts {

// Low-rank thin plate spline basis on a 1-D grid rescaled to [0,1]. The
// radial block is whitened by the inverse square root of the knot penalty,
// so the roughness penalty is block-diag(0_2, I) and the prior precision on
// the nonlinear coefficients is diagonal.
struct SplineBasis {
  Eigen::VectorXd grid;   // m points in [0,1], strictly increasing
  Eigen::MatrixXd B;      // m x L evaluation matrix [1, tau, whitened radial]
  Eigen::MatrixXd Omega;  // L x L penalty, PSD, null space = linear functions
  Eigen::VectorXd knots;  // L-2 interior knots
  int penalty_rank = 0;   // rank(Omega) = L - 2

  int num_points() const { return static_cast<int>(B.rows()); }
  int num_columns() const { return static_cast<int>(B.cols()); }
};

// Default number of basis columns for an m-point grid: min(ceil(m/4), 25).
int default_basis_size(int m);

SplineBasis build_spline_basis(const Eigen::VectorXd& grid, int num_columns);

// Orthonormal factor from a QR-type decomposition of F_raw with the sign
// convention that each column's largest-magnitude element is positive.
// F_raw = Q * T, so coefficient compensation uses T.
struct OrthonormalizedFactors {
  Eigen::MatrixXd Q;  // m x K, Q'Q = I
  Eigen::MatrixXd T;  // K x K, invertible
};

OrthonormalizedFactors orthonormalize_with_transform(const Eigen::MatrixXd& F_raw);
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& F_raw);

// log p(psi | lambda) up to an additive constant:
// (rank(Omega)/2) log lambda - (lambda/2) psi' Omega psi.
double smoothness_logprior(const Eigen::VectorXd& psi, double lambda,
                           const Eigen::MatrixXd& Omega);

}  // namespace nbfts
