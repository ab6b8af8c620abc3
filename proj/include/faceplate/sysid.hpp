#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "faceplate/simulate.hpp"

namespace faceplate {

/// Lagged regression layout for the past window p. Row k-p (k = p..f-1) is
/// [q_{k-1}^T .. q_{k-p}^T, u_{k-1}^T .. u_{k-p}^T]; target row is q_k^T.
/// Carries per-channel standard deviations of the source trajectory so fits
/// can standardize badly scaled force/coefficient channels.
struct RegressionSet {
  Eigen::MatrixXd Phi;  // (f-p) x p(l+m)
  Eigen::MatrixXd T;    // (f-p) x l
  int p = 0;
  int l = 0;
  int m = 0;
  Eigen::VectorXd q_scale;  // length l
  Eigen::VectorXd u_scale;  // length m

  int rows() const { return static_cast<int>(Phi.rows()); }
  int cols() const { return static_cast<int>(Phi.cols()); }
};

RegressionSet build_regressors(const Trajectory& traj, int p);

/// Linear predictor q_k = sum_i Q_i q_{k-i} + sum_i U_i u_{k-i} (no intercept).
/// Coefficient banks are stored in raw units; standardization used during the
/// fit is folded back in.
struct VarxModel {
  int p = 0;
  int l = 0;
  int m = 0;
  std::vector<Eigen::MatrixXd> Q_coeffs;  // p matrices, l x l
  std::vector<Eigen::MatrixXd> U_coeffs;  // p matrices, l x m
};

/// Least-squares / ridge fit of the VARX coefficients on the standardized
/// regression. ridge = 0 requires full column rank (and at least as many rows
/// as columns); rank deficiency reports an error advising a positive ridge.
VarxModel fit_varx(const RegressionSet& reg, double ridge = 0.0);

/// Shallow layered network sharing the lagged-input layout: affine layers of
/// width `width` (identity activations), input p(l+m), output l. Inputs and
/// outputs are standardized with the per-channel statistics stored here; the
/// composed map is affine in the raw variables.
struct NetworkModel {
  int p = 0;
  int l = 0;
  int m = 0;
  std::vector<Eigen::MatrixXd> weights;  // depth+1 matrices
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd q_scale;  // standardization stats (training set)
  Eigen::VectorXd u_scale;
};

/// Scaled-uniform init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases
/// zero, deterministic in seed. Standardization stats start at 1 and are
/// installed by train_network.
NetworkModel init_network(int p, int l, int m, int width = 32, int depth = 2,
                          std::uint64_t seed = 0);

struct TrainConfig {
  int epochs = 5000;
  double lr = 1e-3;
  int batch = 0;  // <= 0: full batch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;  // mini-batch shuffling only
};

struct TrainHistory {
  std::vector<double> train_mse;  // standardized MSE per epoch
  std::vector<double> val_mse;    // standardized closed-loop MSE on the validation set
  int best_epoch = -1;            // epoch of the returned snapshot
};

/// Adaptive-moment (Adam) gradient descent on the standardized MSE. After
/// every epoch the closed-loop validation MSE is evaluated and the returned
/// model is the best-validation snapshot.
TrainHistory train_network(NetworkModel& net, const RegressionSet& train,
                           const RegressionSet& val, const TrainConfig& cfg);

/// Raw-space predictions for regressor rows (both predictor classes collapse
/// to an affine map).
Eigen::MatrixXd predict_rows(const VarxModel& model, const Eigen::MatrixXd& Phi);
Eigen::MatrixXd predict_rows(const NetworkModel& model, const Eigen::MatrixXd& Phi);

/// MSE of raw predictions measured in per-channel standardized units.
double standardized_mse(const Eigen::MatrixXd& pred_rows, const Eigen::MatrixXd& targets,
                        const Eigen::VectorXd& q_scale);

/// Collapse the identity-activation network to its raw-space affine map
/// (W: p(l+m) x l, b: l).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> collapse_network(const NetworkModel& net);

/// VarxModel with the collapsed weight matrix; exact when the bias is zero.
VarxModel varx_from_network(const NetworkModel& net);

struct PredictionResult {
  Eigen::MatrixXd Qhat;  // l x (f-p), columns k = p..f-1
  double eps = 0.0;
  bool diverged = false;
};

/// One-step prediction from measured past outputs; eps is the stacked
/// relative 2-norm error over k = p..f-1.
PredictionResult predict_closed_loop(const VarxModel& model, const Trajectory& traj);
PredictionResult predict_closed_loop(const NetworkModel& model, const Trajectory& traj);

/// Recursive prediction seeded with the first p measured outputs, feeding
/// back its own estimates; inputs stay measured. Divergence flags the result
/// and eps becomes +inf.
PredictionResult predict_open_loop(const VarxModel& model, const Trajectory& traj);
PredictionResult predict_open_loop(const NetworkModel& model, const Trajectory& traj);

/// AIC = N ln det(Sigma) + 2 k with Sigma = residuals^T residuals / N.
double compute_aic(const Eigen::MatrixXd& residuals, int num_params);

struct WhitenessReport {
  Eigen::MatrixXd acf;  // max_lag x l sample autocorrelations (lag 1..max_lag)
  double outside_fraction = 0.0;
  double bound = 0.0;  // 1.96 / sqrt(N)
  std::vector<int> constant_channels;
};

/// Per-output residual autocorrelation with the 5% white-noise band;
/// outside_fraction counts (channel, lag) pairs beyond the band. Constant
/// channels are flagged and excluded.
WhitenessReport residual_whiteness(const Eigen::MatrixXd& residuals, int max_lag);

int count_params(const VarxModel& model);
int count_params(const NetworkModel& model);

struct DatasetTriple {
  Trajectory train;
  Trajectory val;
  Trajectory test;
};

struct FitConfig {
  std::string model_type = "network";  // "varx" | "network"
  double ridge = 0.0;
  int width = 32;
  int depth = 2;
  TrainConfig train;
  std::uint64_t seed = 0;  // per-p seeds derived from this
  int max_lag = 100;
  /// Metrics within this relative window count as ties, resolved toward
  /// smaller p (parsimony).
  double tie_rel = 1e-3;
  bool varx_reference = true;  // also record the least-squares optimum per p
};

struct FitReport {
  int p = 0;
  double eps_cl = 0.0;
  double eps_ol = 0.0;
  double aic = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  Eigen::MatrixXd residual_acf;
  double outside_fraction = 0.0;
  double acf_bound = 0.0;
  int n_params = 0;
  int best_epoch = -1;
  bool ol_diverged = false;
  double train_mse = 0.0;  // standardized training MSE of the returned model
  double varx_ref_mse = std::numeric_limits<double>::quiet_NaN();
};

using FittedModel = std::variant<VarxModel, NetworkModel>;

struct OrderSelection {
  std::vector<FitReport> reports;   // ascending p
  std::vector<FittedModel> models;  // aligned with reports
  int p_aic = 0;
  int p_ol = 0;
};

/// Trains one predictor per candidate p and reports both selection rules:
/// smallest AIC (training one-step residuals) and smallest open-loop test
/// error. Near-ties resolve toward smaller p.
OrderSelection select_order(const DatasetTriple& data, const std::vector<int>& p_grid,
                            const FitConfig& cfg);

}  // namespace faceplate
