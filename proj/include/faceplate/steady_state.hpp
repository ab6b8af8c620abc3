#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

#include "faceplate/errors.hpp"
#include "faceplate/plate_model.hpp"
#include "faceplate/zernike.hpp"

namespace faceplate {

/// Stacked static-control system
///   S = [ M3  -B ]   g = [ 0  ]   w = [ z ]
///       [ C    0 ]       [ y_d]       [ u ]
struct AugmentedSystem {
  Eigen::SparseMatrix<double> S;  // (n+r) x (n+m)
  Eigen::VectorXd g;              // n zeros stacked over y_d
  int n = 0;
  int m = 0;
  int r = 0;
};

struct SteadyStateSolution {
  Eigen::VectorXd u;       // actuator forces, length m
  Eigen::VectorXd z;       // displacements, length n
  Eigen::VectorXd y_star;  // produced wavefront C z, length r
  double residual_norm = 0.0;  // ||g - S w||
  /// Stationarity measure of the converged solve: the relative norm of the
  /// last refinement correction on the equilibrated system (the LSQR
  /// fallback reports its normal-residual ratio instead). A successful
  /// solve has certificate <= tol.
  double certificate = 0.0;
  int iterations = 0;
};

/// Steady-state solve failed to certify optimality; carries the best iterate.
class SteadyStateError : public NumericalError {
 public:
  SteadyStateError(const std::string& msg, SteadyStateSolution best)
      : NumericalError(msg), best_iterate(std::move(best)) {}
  SteadyStateSolution best_iterate;
};

AugmentedSystem assemble_augmented(const SecondOrderModel& model, const Eigen::VectorXd& y_d);

/// Certified least-squares minimizer of ||g - S w||_2. The system is column
/// equilibrated (unit column norms, scaling undone on return) and factorized
/// by rank-revealing sparse QR; numerically rank-deficient systems (actuator
/// directions with near-invisible influence) fall back to a dense complete
/// orthogonal decomposition whose solution is the minimum-norm minimizer,
/// and systems too large for that to LSQR (minimum-norm, started from zero).
/// Each factorized solve is iteratively refined until the relative
/// correction drops below tol, which is the recorded certificate; failures
/// throw SteadyStateError carrying the best iterate. max_iter <= 0 selects
/// the LSQR-fallback default 20 (n + m).
SteadyStateSolution solve_steady_state(const AugmentedSystem& aug, double tol = 1e-10,
                                       int max_iter = 0);

/// y* = C z with M3 z = B u via a sparse direct solve; errors when M3 is
/// effectively singular (unsupported rigid modes).
Eigen::VectorXd apply_control(const SecondOrderModel& model, const Eigen::VectorXd& u);

/// e = ||y_d - y*|| / ||y_d||; zero targets are an error.
double control_error(const Eigen::VectorXd& y_d, const Eigen::VectorXd& y_star);

struct SweepRow {
  ModeIndex mode;
  double e = 0.0;
  double residual = 0.0;
  int iterations = 0;
  Eigen::VectorXd u;
  bool failed = false;
  std::string message;
};

/// Per-mode steady-state study: synthesize target, solve, record e and the
/// force vector. Rows come back sorted by Noll index. With continue_on_error
/// the row records the failure instead of throwing.
std::vector<SweepRow> sweep_modes(const SecondOrderModel& model, const ZernikeMap& zmap,
                                  const std::vector<ModeIndex>& modes, double amplitude,
                                  double tol = 1e-10, bool continue_on_error = false);

/// Dense influence matrix C M3^-1 B, column by column; test/inspection oracle
/// guarded to n <= 5000.
Eigen::MatrixXd dense_influence(const SecondOrderModel& model);

}  // namespace faceplate
