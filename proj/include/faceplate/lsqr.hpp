#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace faceplate {

struct LsqrResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;    // ||b - A x||
  double normal_residual = 0.0;  // ||A^T (b - A x)||
  /// normal_residual / (||A^T b|| + ||A||_F ||b - A x||); converged iff <= tol
  double normal_residual_rel = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Golub-Kahan bidiagonalization least squares (LSQR). Minimizes ||b - A x||_2
/// from x = 0, so the limit is the minimum-norm minimizer. Convergence is
/// certified explicitly against the scale-free optimality bound
///   ||A^T (b - A x)|| <= tol * (||A^T b|| + ||A||_F ||b - A x||),
/// which reduces to the plain ||A^T b|| form on consistent systems and stays
/// attainable in floating point when the least-squares residual is nonzero.
/// When rounding stalls the recurrences before the bound holds, the iteration
/// restarts on the residual system until the budget max_iter is exhausted.
LsqrResult lsqr(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                double tol, int max_iter);

}  // namespace faceplate
