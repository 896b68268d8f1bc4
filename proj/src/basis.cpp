#include "nbfts/basis.hpp"

#include <cmath>

#include "nbfts/error.hpp"

namespace nbfts {

namespace {

double interp_quantile(const Eigen::VectorXd& sorted, double p) {
  const int n = static_cast<int>(sorted.size());
  const double h = (n - 1) * p;
  const int i = static_cast<int>(std::floor(h));
  if (i >= n - 1) return sorted[n - 1];
  return sorted[i] + (h - i) * (sorted[i + 1] - sorted[i]);
}

}  // namespace

int default_basis_size(int m) {
  int l = static_cast<int>(std::ceil(m / 4.0));
  if (l > 25) l = 25;
  if (l < 4) l = 4;
  return l;
}

SplineBasis build_spline_basis(const Eigen::VectorXd& grid, int num_columns) {
  const int m = static_cast<int>(grid.size());
  const int l = num_columns;
  if (l < 4) throw InvalidInputError("build_spline_basis: need at least 4 columns");
  if (m < l) throw InvalidInputError("build_spline_basis: more columns than grid points");
  for (int i = 1; i < m; ++i)
    if (!(grid[i] > grid[i - 1]))
      throw InvalidInputError("build_spline_basis: grid must be strictly increasing");

  SplineBasis out;
  const double lo = grid[0], hi = grid[m - 1];
  out.grid = (grid.array() - lo) / (hi - lo);

  const int q = l - 2;
  out.knots.resize(q);
  for (int j = 0; j < q; ++j)
    out.knots[j] = interp_quantile(out.grid, (j + 1.0) / (l - 1.0));

  Eigen::MatrixXd radial(m, q);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < q; ++j) {
      const double d = std::fabs(out.grid[i] - out.knots[j]);
      radial(i, j) = d * d * d;
    }

  Eigen::MatrixXd knot_pen(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) {
      const double d = std::fabs(out.knots[i] - out.knots[j]);
      knot_pen(i, j) = d * d * d;
    }

  // |.|^3 kernel is only conditionally definite; whiten with the symmetric
  // square root built from absolute eigenvalues (Ruppert-Wand-Carroll).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(knot_pen);
  const Eigen::VectorXd abs_ev = es.eigenvalues().cwiseAbs();
  const double ev_max = abs_ev.maxCoeff();
  if (!(ev_max > 0.0) || abs_ev.minCoeff() < 1e-12 * ev_max)
    throw InvalidInputError("build_spline_basis: knot penalty is numerically singular");
  const Eigen::MatrixXd inv_sqrt =
      es.eigenvectors() * abs_ev.cwiseSqrt().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();

  out.B.resize(m, l);
  out.B.col(0).setOnes();
  out.B.col(1) = out.grid;
  out.B.rightCols(q) = radial * inv_sqrt;

  out.Omega = Eigen::MatrixXd::Zero(l, l);
  out.Omega.bottomRightCorner(q, q).setIdentity();
  out.penalty_rank = q;
  return out;
}

OrthonormalizedFactors orthonormalize_with_transform(const Eigen::MatrixXd& F_raw) {
  const int m = static_cast<int>(F_raw.rows());
  const int k = static_cast<int>(F_raw.cols());
  if (m < k) throw DegenerateBasisError("orthonormalize: fewer rows than columns");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(F_raw);
  Eigen::MatrixXd q_mat = qr.householderQ() * Eigen::MatrixXd::Identity(m, k);
  Eigen::MatrixXd t_mat =
      qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();

  double diag_max = 0.0;
  for (int j = 0; j < k; ++j) diag_max = std::max(diag_max, std::fabs(t_mat(j, j)));
  for (int j = 0; j < k; ++j)
    if (std::fabs(t_mat(j, j)) < 1e-12 * diag_max || t_mat(j, j) == 0.0)
      throw DegenerateBasisError("orthonormalize: input is rank deficient");

  // Largest-magnitude element of each column made positive.
  for (int j = 0; j < k; ++j) {
    int idx = 0;
    q_mat.col(j).cwiseAbs().maxCoeff(&idx);
    if (q_mat(idx, j) < 0.0) {
      q_mat.col(j) = -q_mat.col(j);
      t_mat.row(j) = -t_mat.row(j);
    }
  }
  return OrthonormalizedFactors{std::move(q_mat), std::move(t_mat)};
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& F_raw) {
  return orthonormalize_with_transform(F_raw).Q;
}

double smoothness_logprior(const Eigen::VectorXd& psi, double lambda,
                           const Eigen::MatrixXd& Omega) {
  if (!(lambda > 0.0))
    throw InvalidParameterError("smoothness_logprior: lambda must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Omega, Eigen::EigenvaluesOnly);
  const double ev_max = es.eigenvalues().cwiseAbs().maxCoeff();
  int rank = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i] > 1e-10 * std::max(1.0, ev_max)) ++rank;
  const double quad = psi.dot(Omega * psi);
  return 0.5 * rank * std::log(lambda) - 0.5 * lambda * quad;
}

}  // namespace nbfts
