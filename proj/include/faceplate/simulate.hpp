#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <optional>
#include <string>

#include "faceplate/plate_model.hpp"
#include "faceplate/zernike.hpp"

namespace faceplate {

/// First-order descriptor form E xd = A x + G u with state x = [z; zd]:
///   E = blkdiag(I, M1), A = [[0, I], [-M3, -M2]], G = [0; B].
/// C is carried along (r x n, acting on the z half) so stepping can emit
/// outputs directly.
struct DescriptorSystem {
  Eigen::SparseMatrix<double> E;  // 2n x 2n
  Eigen::SparseMatrix<double> A;  // 2n x 2n
  Eigen::SparseMatrix<double> G;  // 2n x m
  Eigen::SparseMatrix<double> C;  // r x n
  int n = 0;
};

DescriptorSystem to_descriptor(const SecondOrderModel& model);

struct SimResult {
  Eigen::MatrixXd outputs;  // r x f, y_k = C z_k
  Eigen::MatrixXd states;   // 2n x f when requested, else empty
  Eigen::VectorXd final_state;
};

/// Backward Euler: (E - h A) x_{k+1} = E x_k + h G u_{k+1}, with the input
/// sample U.col(k) held over step k -> k+1 (so outputs at sample k depend on
/// strictly earlier input columns). The step matrix is factorized once via
/// exact block elimination to the n x n SPD system M1 + h M2 + h^2 M3.
/// Outputs are sampled at k = 0..f-1 where f = U.cols(); the last input
/// column only influences states beyond the returned window.
SimResult simulate_be(const DescriptorSystem& sys, double h, const Eigen::VectorXd& x0,
                      const Eigen::MatrixXd& U, bool want_states = false);

/// 0.5 (zd^T M1 zd + z^T M3 z); monotone under backward Euler with zero input.
double discrete_energy(const SecondOrderModel& model, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& zdot);

/// Time-indexed input/output record. Column k of U is the force sample held
/// over step k -> k+1; column k of Q holds the Zernike coefficients of the
/// observed displacement at sample k.
struct Trajectory {
  double h = 0.0;
  Eigen::MatrixXd U;  // m x f
  Eigen::MatrixXd Q;  // l x f
  std::optional<Eigen::MatrixXd> Q_clean;
  std::uint64_t seed = 0;
  double snr = 0.0;  // 0 = noise-free
  double input_std = 0.0;
  double init_std = 0.0;
  std::string model_hash;

  int f() const { return static_cast<int>(Q.cols()); }
  int l() const { return static_cast<int>(Q.rows()); }
  int m() const { return static_cast<int>(U.rows()); }
};

/// White-noise excitation protocol: i.i.d. Gaussian force sequences
/// (std input_std per actuator), Gaussian initial displacements
/// (std init_std, zero initial velocity), backward-Euler integration, and
/// projection of the observed displacements onto the Zernike map. A pure
/// function of (model, zmap, parameters, seed).
Trajectory generate_dataset(const SecondOrderModel& model, const ZernikeMap& zmap, double h,
                            int f, std::uint64_t seed, double input_std, double init_std);

/// Additive per-channel Gaussian noise with variance var(Q_j)/snr (power SNR).
/// Zero-variance channels stay noise-free (with a warning). The draw is keyed
/// by (seed, "noise"), independent of the input/init streams.
Eigen::MatrixXd add_measurement_noise(const Eigen::MatrixXd& Q, double snr, std::uint64_t seed);

}  // namespace faceplate
