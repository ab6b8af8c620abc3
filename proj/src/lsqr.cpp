#include "faceplate/lsqr.hpp"

#include <cmath>

#include "faceplate/errors.hpp"

namespace faceplate {

namespace {

// One bidiagonalization sweep for min ||r - A d||, d starting at zero.
// norm_a is a Frobenius estimate of ||A||; the Paige-Saunders recurrences
// supply running estimates of ||r - A d|| (phibar) and ||A^T (r - A d)||
// used only to decide when to stop and verify explicitly.
Eigen::VectorXd lsqr_pass(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& r,
                          double tol, double norm_atb, double norm_a, int max_pass_iters,
                          int& used) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(A.cols());
  Eigen::VectorXd u = r;
  double beta = u.norm();
  if (beta == 0.0) return d;
  u /= beta;
  Eigen::VectorXd v = A.transpose() * u;
  double alpha = v.norm();
  if (alpha == 0.0) return d;
  v /= alpha;
  Eigen::VectorXd w = v;
  double phibar = beta;
  double rhobar = alpha;

  for (int it = 0; it < max_pass_iters; ++it) {
    ++used;
    u = A * v - alpha * u;
    beta = u.norm();
    if (beta > 0) u /= beta;
    v = A.transpose() * u - beta * v;
    alpha = v.norm();
    if (alpha > 0) v /= alpha;

    const double rho = std::hypot(rhobar, beta);
    const double c = rhobar / rho;
    const double s = beta / rho;
    const double theta = s * alpha;
    rhobar = -c * alpha;
    const double phi = c * phibar;
    phibar = s * phibar;

    d += (phi / rho) * w;
    w = v - (theta / rho) * w;

    const double est_normal = phibar * alpha * std::abs(c);
    if (est_normal <= 0.25 * tol * (norm_atb + norm_a * phibar)) break;
    if (beta == 0.0 || alpha == 0.0) break;
  }
  return d;
}

}  // namespace

LsqrResult lsqr(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                double tol, int max_iter) {
  if (!(tol > 0)) throw ConfigError("lsqr tolerance must be positive");
  LsqrResult res;
  res.x = Eigen::VectorXd::Zero(A.cols());

  const double norm_atb = (A.transpose() * b).norm();
  const double norm_a = A.norm();  // Frobenius
  if (norm_atb == 0.0) {
    // b is orthogonal to range(A); x = 0 is optimal.
    res.residual_norm = b.norm();
    res.converged = true;
    return res;
  }

  // optimality measured against tol * (||A^T b|| + ||A|| ||r||); the second
  // term keeps the target reachable when the least-squares residual r does
  // not vanish
  const auto target = [&](double r_norm) { return tol * (norm_atb + norm_a * r_norm); };

  Eigen::VectorXd r = b;
  double prev_normal = norm_atb;
  while (res.iterations < max_iter) {
    res.x += lsqr_pass(A, r, tol, norm_atb, norm_a, max_iter - res.iterations, res.iterations);
    r = b - A * res.x;
    const double normal = (A.transpose() * r).norm();
    if (normal <= target(r.norm())) break;
    // restart recovers progress lost to rounding; stop once it no longer helps
    if (normal > 0.9 * prev_normal) break;
    prev_normal = normal;
  }

  res.residual_norm = r.norm();
  res.normal_residual = (A.transpose() * r).norm();
  res.normal_residual_rel = res.normal_residual / (norm_atb + norm_a * res.residual_norm);
  res.converged = res.normal_residual <= target(res.residual_norm);
  return res;
}

}  // namespace faceplate
