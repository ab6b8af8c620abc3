#include "faceplate/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include <Eigen/SparseCholesky>

#include "faceplate/errors.hpp"
#include "faceplate/rng.hpp"

namespace faceplate {

DescriptorSystem to_descriptor(const SecondOrderModel& model) {
  const int n = model.n();
  DescriptorSystem sys;
  sys.n = n;

  std::vector<Eigen::Triplet<double>> et, at, gt;
  et.reserve(n + model.M1.nonZeros());
  for (int k = 0; k < n; ++k) et.emplace_back(k, k, 1.0);
  for (int col = 0; col < model.M1.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(model.M1, col); it; ++it)
      et.emplace_back(n + static_cast<int>(it.row()), n + static_cast<int>(it.col()), it.value());

  at.reserve(n + model.M2.nonZeros() + model.M3.nonZeros());
  for (int k = 0; k < n; ++k) at.emplace_back(k, n + k, 1.0);
  for (int col = 0; col < model.M3.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(model.M3, col); it; ++it)
      at.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), -it.value());
  for (int col = 0; col < model.M2.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(model.M2, col); it; ++it)
      at.emplace_back(n + static_cast<int>(it.row()), n + static_cast<int>(it.col()), -it.value());

  gt.reserve(model.B.nonZeros());
  for (int col = 0; col < model.B.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(model.B, col); it; ++it)
      gt.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());

  sys.E.resize(2 * n, 2 * n);
  sys.E.setFromTriplets(et.begin(), et.end());
  sys.A.resize(2 * n, 2 * n);
  sys.A.setFromTriplets(at.begin(), at.end());
  sys.G.resize(2 * n, static_cast<int>(model.B.cols()));
  sys.G.setFromTriplets(gt.begin(), gt.end());
  sys.C = model.C;
  sys.E.makeCompressed();
  sys.A.makeCompressed();
  sys.G.makeCompressed();
  return sys;
}

SimResult simulate_be(const DescriptorSystem& sys, double h, const Eigen::VectorXd& x0,
                      const Eigen::MatrixXd& U, bool want_states) {
  if (!(h > 0)) throw ConfigError("time step h must be positive");
  const int n = sys.n;
  if (x0.size() != 2 * n) throw ConfigError("state size mismatch");
  if (U.rows() != sys.G.cols()) throw ConfigError("input channel count mismatch");
  const int f = static_cast<int>(U.cols());
  if (f < 1) throw ConfigError("need at least one input sample");

  // recover the second-order blocks; the 2n x 2n step matrix (E - h A) is
  // eliminated exactly to the SPD system (M1 + h M2 + h^2 M3) v_{k+1} = rhs
  const Eigen::SparseMatrix<double> M1 = sys.E.block(n, n, n, n);
  const Eigen::SparseMatrix<double> M2 = -Eigen::SparseMatrix<double>(sys.A.block(n, n, n, n));
  const Eigen::SparseMatrix<double> M3 = -Eigen::SparseMatrix<double>(sys.A.block(n, 0, n, n));
  const Eigen::SparseMatrix<double> B = sys.G.block(n, 0, n, sys.G.cols());

  Eigen::SparseMatrix<double> P = M1 + h * M2 + (h * h) * M3;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(P);
  if (solver.info() != Eigen::Success)
    throw NumericalError("singular backward-Euler step matrix (E - h A)");

  SimResult out;
  out.outputs.resize(sys.C.rows(), f);
  if (want_states) out.states.resize(2 * n, f);

  Eigen::VectorXd z = x0.head(n);
  Eigen::VectorXd v = x0.tail(n);
  out.outputs.col(0) = sys.C * z;
  if (want_states) out.states.col(0) = x0;

  for (int k = 1; k < f; ++k) {
    const Eigen::VectorXd rhs = M1 * v + h * (B * U.col(k - 1) - M3 * z);
    v = solver.solve(rhs);
    if (!v.allFinite()) throw NumericalError("backward-Euler step produced non-finite state");
    z += h * v;
    out.outputs.col(k) = sys.C * z;
    if (want_states) {
      out.states.col(k).head(n) = z;
      out.states.col(k).tail(n) = v;
    }
  }
  out.final_state.resize(2 * n);
  out.final_state.head(n) = z;
  out.final_state.tail(n) = v;
  return out;
}

double discrete_energy(const SecondOrderModel& model, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& zdot) {
  return 0.5 * (zdot.dot(model.M1 * zdot) + z.dot(model.M3 * z));
}

Trajectory generate_dataset(const SecondOrderModel& model, const ZernikeMap& zmap, double h,
                            int f, std::uint64_t seed, double input_std, double init_std) {
  if (f < 2) throw ConfigError("need at least two samples (f >= 2)");
  if (input_std < 0 || init_std < 0) throw ConfigError("noise levels must be non-negative");

  const int m = model.m();
  const int n = model.n();

  CounterRng input_rng(seed, "input");
  Eigen::MatrixXd U(m, f);
  for (int k = 0; k < f; ++k)
    for (int ch = 0; ch < m; ++ch) U(ch, k) = input_std * input_rng.normal();

  CounterRng init_rng(seed, "init");
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2 * n);
  for (int i = 0; i < n; ++i) x0(i) = init_std * init_rng.normal();

  const DescriptorSystem sys = to_descriptor(model);
  const SimResult sim = simulate_be(sys, h, x0, U);

  Trajectory traj;
  traj.h = h;
  traj.U = std::move(U);
  traj.Q = zmap.C1 * sim.outputs;
  traj.seed = seed;
  traj.input_std = input_std;
  traj.init_std = init_std;
  return traj;
}

Eigen::MatrixXd add_measurement_noise(const Eigen::MatrixXd& Q, double snr, std::uint64_t seed) {
  if (!(snr > 0)) throw ConfigError("snr must be positive");
  const int l = static_cast<int>(Q.rows());
  const int f = static_cast<int>(Q.cols());

  Eigen::VectorXd sigma(l);
  for (int j = 0; j < l; ++j) {
    const double mean = Q.row(j).mean();
    const double var = (Q.row(j).array() - mean).square().mean();
    if (var <= 0) {
      std::fprintf(stderr, "warning: output channel %d has zero variance; left noise-free\n", j);
      sigma(j) = 0.0;
    } else {
      sigma(j) = std::sqrt(var / snr);
    }
  }

  CounterRng rng(seed, "noise");
  Eigen::MatrixXd noisy = Q;
  for (int k = 0; k < f; ++k)
    for (int j = 0; j < l; ++j) noisy(j, k) += sigma(j) * rng.normal();
  return noisy;
}

}  // namespace faceplate
