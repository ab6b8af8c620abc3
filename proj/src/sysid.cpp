#include "faceplate/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "faceplate/errors.hpp"
#include "faceplate/rng.hpp"

namespace faceplate {

namespace {

Eigen::VectorXd channel_std(const Eigen::MatrixXd& X) {
  Eigen::VectorXd s(X.rows());
  for (int j = 0; j < X.rows(); ++j) {
    const double mean = X.row(j).mean();
    const double var = (X.row(j).array() - mean).square().mean();
    s(j) = var > 0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

// per-column standardization factors of the regressor layout
Eigen::VectorXd column_scales(const RegressionSet& reg) {
  Eigen::VectorXd s(reg.cols());
  for (int i = 0; i < reg.p; ++i) s.segment(i * reg.l, reg.l) = reg.q_scale;
  for (int i = 0; i < reg.p; ++i)
    s.segment(reg.p * reg.l + i * reg.m, reg.m) = reg.u_scale;
  return s;
}

// raw-space affine predictor; both model classes reduce to this
struct AffineMap {
  Eigen::MatrixXd W;     // cols x l
  Eigen::RowVectorXd b;  // l
};

AffineMap to_affine(const VarxModel& model) {
  const int cols = model.p * (model.l + model.m);
  AffineMap map;
  map.W.resize(cols, model.l);
  map.b = Eigen::RowVectorXd::Zero(model.l);
  for (int i = 0; i < model.p; ++i) {
    map.W.middleRows(i * model.l, model.l) = model.Q_coeffs[i].transpose();
    map.W.middleRows(model.p * model.l + i * model.m, model.m) =
        model.U_coeffs[i].transpose();
  }
  return map;
}

AffineMap to_affine(const NetworkModel& net) {
  auto [W, b] = collapse_network(net);
  AffineMap map;
  map.W = std::move(W);
  map.b = b.transpose();
  return map;
}

Eigen::VectorXd network_column_scales(const NetworkModel& net) {
  Eigen::VectorXd s(net.p * (net.l + net.m));
  for (int i = 0; i < net.p; ++i) s.segment(i * net.l, net.l) = net.q_scale;
  for (int i = 0; i < net.p; ++i) s.segment(net.p * net.l + i * net.m, net.m) = net.u_scale;
  return s;
}

PredictionResult closed_loop_impl(const AffineMap& map, int p, const Trajectory& traj) {
  if (traj.f() <= p) throw ConfigError("trajectory shorter than the past window");
  const RegressionSet reg = build_regressors(traj, p);
  Eigen::MatrixXd pred = (reg.Phi * map.W).rowwise() + map.b;

  PredictionResult res;
  res.Qhat = pred.transpose();
  res.diverged = !pred.allFinite();
  const double denom = reg.T.norm();
  res.eps = denom > 0 ? (reg.T - pred).norm() / denom
                      : (pred.norm() > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  return res;
}

PredictionResult open_loop_impl(const AffineMap& map, int p, const Trajectory& traj) {
  const int f = traj.f();
  const int l = traj.l();
  const int m = traj.m();
  if (f <= p) throw ConfigError("trajectory shorter than the past window");

  PredictionResult res;
  res.Qhat.setConstant(l, f - p, std::numeric_limits<double>::quiet_NaN());

  // ring of the p most recent outputs, measured for k < p, predicted after
  std::vector<Eigen::VectorXd> history(p);
  for (int i = 0; i < p; ++i) history[i] = traj.Q.col(i);

  Eigen::RowVectorXd phi(p * (l + m));
  for (int k = p; k < f; ++k) {
    for (int i = 1; i <= p; ++i) {
      const int src = k - i;
      const Eigen::VectorXd& q =
          src < p ? history[src] : Eigen::VectorXd(res.Qhat.col(src - p));
      phi.segment((i - 1) * l, l) = q.transpose();
      phi.segment(p * l + (i - 1) * m, m) = traj.U.col(src).transpose();
    }
    Eigen::RowVectorXd qk = phi * map.W + map.b;
    if (!qk.allFinite()) {
      res.diverged = true;
      res.eps = std::numeric_limits<double>::infinity();
      return res;
    }
    res.Qhat.col(k - p) = qk.transpose();
  }

  const Eigen::MatrixXd truth = traj.Q.rightCols(f - p);
  const double denom = truth.norm();
  res.eps = denom > 0 ? (truth - res.Qhat).norm() / denom
                      : (res.Qhat.norm() > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  return res;
}

}  // namespace

RegressionSet build_regressors(const Trajectory& traj, int p) {
  const int f = traj.f();
  const int l = traj.l();
  const int m = traj.m();
  if (p < 1 || p >= f)
    throw ConfigError("past window p must satisfy 1 <= p < f (p=" + std::to_string(p) +
                      ", f=" + std::to_string(f) + ")");

  RegressionSet reg;
  reg.p = p;
  reg.l = l;
  reg.m = m;
  reg.Phi.resize(f - p, p * (l + m));
  reg.T.resize(f - p, l);
  for (int k = p; k < f; ++k) {
    const int row = k - p;
    for (int i = 1; i <= p; ++i) {
      reg.Phi.block(row, (i - 1) * l, 1, l) = traj.Q.col(k - i).transpose();
      reg.Phi.block(row, p * l + (i - 1) * m, 1, m) = traj.U.col(k - i).transpose();
    }
    reg.T.row(row) = traj.Q.col(k).transpose();
  }
  reg.q_scale = channel_std(traj.Q);
  reg.u_scale = channel_std(traj.U);
  return reg;
}

VarxModel fit_varx(const RegressionSet& reg, double ridge) {
  if (ridge < 0) throw ConfigError("ridge must be non-negative");
  if (ridge == 0 && reg.rows() < reg.cols())
    throw ConfigError("under-determined regression (rows < columns); supply a positive ridge");

  const Eigen::VectorXd cs = column_scales(reg);
  const Eigen::MatrixXd Phi_s = reg.Phi.array().rowwise() / cs.transpose().array();
  const Eigen::MatrixXd T_s = reg.T.array().rowwise() / reg.q_scale.transpose().array();

  Eigen::MatrixXd W;
  if (ridge == 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Phi_s);
    if (qr.rank() < reg.cols())
      throw NumericalError("rank-deficient regressors; refit with a positive ridge");
    W = qr.solve(T_s);
  } else {
    Eigen::MatrixXd gram = Phi_s.transpose() * Phi_s;
    gram.diagonal().array() += ridge;
    W = Eigen::LDLT<Eigen::MatrixXd>(gram).solve(Phi_s.transpose() * T_s);
  }

  // fold the standardization back into raw coefficient banks:
  // W_raw(c, j) = W(c, j) * q_scale(j) / col_scale(c)
  VarxModel model;
  model.p = reg.p;
  model.l = reg.l;
  model.m = reg.m;
  model.Q_coeffs.resize(reg.p);
  model.U_coeffs.resize(reg.p);
  for (int i = 0; i < reg.p; ++i) {
    Eigen::MatrixXd Wq = W.middleRows(i * reg.l, reg.l);  // l x l
    Eigen::MatrixXd Wu = W.middleRows(reg.p * reg.l + i * reg.m, reg.m);  // m x l
    model.Q_coeffs[i] =
        (Wq.transpose().array().colwise() * reg.q_scale.array()).rowwise() /
        reg.q_scale.transpose().array();
    model.U_coeffs[i] =
        (Wu.transpose().array().colwise() * reg.q_scale.array()).rowwise() /
        reg.u_scale.transpose().array();
  }
  return model;
}

NetworkModel init_network(int p, int l, int m, int width, int depth, std::uint64_t seed) {
  if (width < 1) throw ConfigError("network width must be >= 1");
  if (depth < 1) throw ConfigError("network depth must be >= 1");
  NetworkModel net;
  net.p = p;
  net.l = l;
  net.m = m;
  net.q_scale = Eigen::VectorXd::Ones(l);
  net.u_scale = Eigen::VectorXd::Ones(m);

  std::vector<int> dims;
  dims.push_back(p * (l + m));
  for (int i = 0; i < depth; ++i) dims.push_back(width);
  dims.push_back(l);

  CounterRng rng(seed, "init");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    Eigen::MatrixXd W(dims[i], dims[i + 1]);
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) W(r, c) = scale * (2.0 * rng.uniform01() - 1.0);
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::VectorXd::Zero(dims[i + 1]));
  }
  return net;
}

TrainHistory train_network(NetworkModel& net, const RegressionSet& train,
                           const RegressionSet& val, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(cfg.lr > 0)) throw ConfigError("learning rate must be positive");
  if (train.cols() != net.p * (net.l + net.m))
    throw ConfigError("regressor width does not match the network input layer");

  // standardization statistics come from the training set and ride with the model
  net.q_scale = train.q_scale;
  net.u_scale = train.u_scale;
  const Eigen::VectorXd cs = column_scales(train);

  const Eigen::MatrixXd X = train.Phi.array().rowwise() / cs.transpose().array();
  const Eigen::MatrixXd Y = train.T.array().rowwise() / train.q_scale.transpose().array();
  const Eigen::MatrixXd Xv = val.Phi.array().rowwise() / cs.transpose().array();
  const Eigen::MatrixXd Yv = val.T.array().rowwise() / train.q_scale.transpose().array();

  const int rows = static_cast<int>(X.rows());
  const int layers = static_cast<int>(net.weights.size());
  const int batch = (cfg.batch <= 0 || cfg.batch >= rows) ? rows : cfg.batch;

  std::vector<Eigen::MatrixXd> mW(layers), vW(layers);
  std::vector<Eigen::VectorXd> mB(layers), vB(layers);
  for (int i = 0; i < layers; ++i) {
    mW[i] = Eigen::MatrixXd::Zero(net.weights[i].rows(), net.weights[i].cols());
    vW[i] = mW[i];
    mB[i] = Eigen::VectorXd::Zero(net.biases[i].size());
    vB[i] = mB[i];
  }

  auto forward = [&](const Eigen::MatrixXd& input, std::vector<Eigen::MatrixXd>* acts) {
    Eigen::MatrixXd h = input;
    if (acts) acts->push_back(h);
    for (int i = 0; i < layers; ++i) {
      h = (h * net.weights[i]).rowwise() + net.biases[i].transpose();
      if (acts && i + 1 < layers) acts->push_back(h);
    }
    return h;
  };

  TrainHistory hist;
  hist.train_mse.reserve(cfg.epochs);
  hist.val_mse.reserve(cfg.epochs);

  std::vector<Eigen::MatrixXd> best_w = net.weights;
  std::vector<Eigen::VectorXd> best_b = net.biases;
  double best_val = std::numeric_limits<double>::infinity();

  CounterRng shuffle_rng(cfg.seed, "shuffle");
  std::vector<int> perm(rows);
  std::iota(perm.begin(), perm.end(), 0);

  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    long long seen = 0;

    if (batch < rows) {
      for (int i = rows - 1; i > 0; --i) {
        const int j = static_cast<int>(shuffle_rng.next_u64() % (i + 1));
        std::swap(perm[i], perm[j]);
      }
    }

    for (int start = 0; start < rows; start += batch) {
      const int count = std::min(batch, rows - start);
      Eigen::MatrixXd Xb, Yb;
      if (batch == rows) {
        Xb = X;
        Yb = Y;
      } else {
        Xb.resize(count, X.cols());
        Yb.resize(count, Y.cols());
        for (int i = 0; i < count; ++i) {
          Xb.row(i) = X.row(perm[start + i]);
          Yb.row(i) = Y.row(perm[start + i]);
        }
      }

      std::vector<Eigen::MatrixXd> acts;
      const Eigen::MatrixXd pred = forward(Xb, &acts);
      const Eigen::MatrixXd diff = pred - Yb;
      const double loss = diff.squaredNorm() / (static_cast<double>(count) * net.l);
      if (!std::isfinite(loss))
        throw NumericalError("training diverged (non-finite loss); reduce the learning rate");
      epoch_loss += loss * count;
      seen += count;

      // backprop through the affine chain
      Eigen::MatrixXd grad = (2.0 / (static_cast<double>(count) * net.l)) * diff;
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      std::vector<Eigen::MatrixXd> gW(layers);
      std::vector<Eigen::VectorXd> gB(layers);
      for (int i = layers - 1; i >= 0; --i) {
        gW[i] = acts[i].transpose() * grad;
        gB[i] = grad.colwise().sum().transpose();
        if (i > 0) grad = grad * net.weights[i].transpose();
      }
      for (int i = 0; i < layers; ++i) {
        mW[i] = cfg.beta1 * mW[i] + (1 - cfg.beta1) * gW[i];
        vW[i] = cfg.beta2 * vW[i] + (1 - cfg.beta2) * gW[i].cwiseProduct(gW[i]);
        net.weights[i] -= cfg.lr *
                          (mW[i] / bc1).cwiseQuotient(((vW[i] / bc2).cwiseSqrt().array() +
                                                       cfg.adam_eps).matrix());
        mB[i] = cfg.beta1 * mB[i] + (1 - cfg.beta1) * gB[i];
        vB[i] = cfg.beta2 * vB[i] + (1 - cfg.beta2) * gB[i].cwiseProduct(gB[i]);
        net.biases[i] -= cfg.lr *
                         (mB[i] / bc1).cwiseQuotient(((vB[i] / bc2).cwiseSqrt().array() +
                                                      cfg.adam_eps).matrix());
      }
    }

    hist.train_mse.push_back(epoch_loss / static_cast<double>(seen));

    const Eigen::MatrixXd val_pred = forward(Xv, nullptr);
    const double val_loss =
        (val_pred - Yv).squaredNorm() / (static_cast<double>(Xv.rows()) * net.l);
    hist.val_mse.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_w = net.weights;
      best_b = net.biases;
      hist.best_epoch = epoch;
    }
  }

  net.weights = std::move(best_w);
  net.biases = std::move(best_b);
  return hist;
}

Eigen::MatrixXd predict_rows(const VarxModel& model, const Eigen::MatrixXd& Phi) {
  const AffineMap map = to_affine(model);
  return (Phi * map.W).rowwise() + map.b;
}

Eigen::MatrixXd predict_rows(const NetworkModel& model, const Eigen::MatrixXd& Phi) {
  const AffineMap map = to_affine(model);
  return (Phi * map.W).rowwise() + map.b;
}

double standardized_mse(const Eigen::MatrixXd& pred_rows, const Eigen::MatrixXd& targets,
                        const Eigen::VectorXd& q_scale) {
  const Eigen::MatrixXd diff =
      (pred_rows - targets).array().rowwise() / q_scale.transpose().array();
  return diff.squaredNorm() / (static_cast<double>(targets.rows()) * targets.cols());
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> collapse_network(const NetworkModel& net) {
  Eigen::MatrixXd W = net.weights.front();
  Eigen::RowVectorXd b = net.biases.front().transpose();
  for (std::size_t i = 1; i < net.weights.size(); ++i) {
    W = W * net.weights[i];
    b = b * net.weights[i] + net.biases[i].transpose();
  }
  // undo standardization: raw W(c, j) = W(c, j) q_scale(j) / col_scale(c)
  const Eigen::VectorXd cs = network_column_scales(net);
  W = W.array().colwise() / cs.array();
  W = W.array().rowwise() * net.q_scale.transpose().array();
  Eigen::VectorXd braw = b.transpose().cwiseProduct(net.q_scale);
  return {std::move(W), std::move(braw)};
}

VarxModel varx_from_network(const NetworkModel& net) {
  auto [W, b] = collapse_network(net);
  VarxModel model;
  model.p = net.p;
  model.l = net.l;
  model.m = net.m;
  model.Q_coeffs.resize(net.p);
  model.U_coeffs.resize(net.p);
  for (int i = 0; i < net.p; ++i) {
    model.Q_coeffs[i] = W.middleRows(i * net.l, net.l).transpose();
    model.U_coeffs[i] = W.middleRows(net.p * net.l + i * net.m, net.m).transpose();
  }
  return model;
}

PredictionResult predict_closed_loop(const VarxModel& model, const Trajectory& traj) {
  return closed_loop_impl(to_affine(model), model.p, traj);
}
PredictionResult predict_closed_loop(const NetworkModel& model, const Trajectory& traj) {
  return closed_loop_impl(to_affine(model), model.p, traj);
}
PredictionResult predict_open_loop(const VarxModel& model, const Trajectory& traj) {
  return open_loop_impl(to_affine(model), model.p, traj);
}
PredictionResult predict_open_loop(const NetworkModel& model, const Trajectory& traj) {
  return open_loop_impl(to_affine(model), model.p, traj);
}

double compute_aic(const Eigen::MatrixXd& residuals, int num_params) {
  const int N = static_cast<int>(residuals.rows());
  const int l = static_cast<int>(residuals.cols());
  if (N <= l) throw ConfigError("AIC needs more residual samples than output channels");

  const Eigen::MatrixXd sigma = residuals.transpose() * residuals / static_cast<double>(N);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
  double logdet = 0.0;
  for (int i = 0; i < l; ++i) {
    const double d = ldlt.vectorD()(i);
    if (!(d > 0) || !std::isfinite(d))
      throw NumericalError("singular residual covariance; use more data or fewer outputs");
    logdet += std::log(d);
  }
  return N * logdet + 2.0 * num_params;
}

WhitenessReport residual_whiteness(const Eigen::MatrixXd& residuals, int max_lag) {
  const int N = static_cast<int>(residuals.rows());
  const int l = static_cast<int>(residuals.cols());
  if (max_lag < 1) throw ConfigError("max_lag must be >= 1");
  if (max_lag >= N / 4) throw ConfigError("max_lag must be below N/4");

  WhitenessReport rep;
  rep.bound = 1.96 / std::sqrt(static_cast<double>(N));
  rep.acf.setConstant(max_lag, l, std::numeric_limits<double>::quiet_NaN());

  long long outside = 0, total = 0;
  for (int j = 0; j < l; ++j) {
    const Eigen::VectorXd e = residuals.col(j).array() - residuals.col(j).mean();
    const double denom = e.squaredNorm();
    // a channel is constant when its spread is at rounding level
    if (!(denom > 0) ||
        e.cwiseAbs().maxCoeff() <= 1e-12 * residuals.col(j).cwiseAbs().maxCoeff()) {
      rep.constant_channels.push_back(j);
      continue;
    }
    for (int tau = 1; tau <= max_lag; ++tau) {
      const double r = e.head(N - tau).dot(e.tail(N - tau)) / denom;
      rep.acf(tau - 1, j) = r;
      ++total;
      if (std::abs(r) > rep.bound) ++outside;
    }
  }
  rep.outside_fraction = total > 0 ? static_cast<double>(outside) / total : 0.0;
  return rep;
}

int count_params(const VarxModel& model) {
  return model.p * model.l * (model.l + model.m);
}

int count_params(const NetworkModel& model) {
  int count = 0;
  for (const auto& W : model.weights) count += static_cast<int>(W.size());
  for (const auto& b : model.biases) count += static_cast<int>(b.size());
  return count;
}

OrderSelection select_order(const DatasetTriple& data, const std::vector<int>& p_grid,
                            const FitConfig& cfg) {
  if (p_grid.empty()) throw ConfigError("p_grid must not be empty");
  if (cfg.model_type != "varx" && cfg.model_type != "network")
    throw ConfigError("identification.model must be \"varx\" or \"network\"");

  std::vector<int> grid = p_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  OrderSelection sel;
  for (int p : grid) {
    const RegressionSet train_reg = build_regressors(data.train, p);
    const RegressionSet val_reg = build_regressors(data.val, p);

    FitReport rep;
    rep.p = p;
    FittedModel model;

    if (cfg.model_type == "varx") {
      VarxModel varx = fit_varx(train_reg, cfg.ridge);
      rep.n_params = count_params(varx);
      rep.train_mse = standardized_mse(predict_rows(varx, train_reg.Phi), train_reg.T,
                                       train_reg.q_scale);
      rep.varx_ref_mse = rep.train_mse;
      rep.train_loss = {rep.train_mse};
      model = std::move(varx);
    } else {
      NetworkModel net = init_network(p, train_reg.l, train_reg.m, cfg.width, cfg.depth,
                                      mix64(cfg.seed ^ (0x100000001b3ull * (p + 1))));
      TrainConfig tc = cfg.train;
      tc.seed = mix64(cfg.seed ^ (0x9e3779b97f4a7c15ull * (p + 1)));
      TrainHistory hist = train_network(net, train_reg, val_reg, tc);
      rep.n_params = count_params(net);
      rep.train_mse = standardized_mse(predict_rows(net, train_reg.Phi), train_reg.T,
                                       train_reg.q_scale);
      rep.train_loss = std::move(hist.train_mse);
      rep.val_loss = std::move(hist.val_mse);
      rep.best_epoch = hist.best_epoch;
      if (cfg.varx_reference) {
        try {
          const VarxModel ref = fit_varx(train_reg, cfg.ridge);
          rep.varx_ref_mse = standardized_mse(predict_rows(ref, train_reg.Phi), train_reg.T,
                                              train_reg.q_scale);
        } catch (const std::exception&) {
          // reference stays NaN; the network fit itself is unaffected
        }
      }
      model = std::move(net);
    }

    const auto eval = [&](const auto& fitted) {
      const PredictionResult cl_train = predict_closed_loop(fitted, data.train);
      const PredictionResult cl_test = predict_closed_loop(fitted, data.test);
      const PredictionResult ol_test = predict_open_loop(fitted, data.test);
      rep.eps_cl = cl_test.eps;
      rep.eps_ol = ol_test.eps;
      rep.ol_diverged = ol_test.diverged;

      const Eigen::MatrixXd train_res =
          build_regressors(data.train, p).T - cl_train.Qhat.transpose();
      try {
        rep.aic = compute_aic(train_res, rep.n_params);
      } catch (const NumericalError&) {
        rep.aic = std::numeric_limits<double>::infinity();
      }

      const Eigen::MatrixXd test_res =
          build_regressors(data.test, p).T - cl_test.Qhat.transpose();
      const int N = static_cast<int>(test_res.rows());
      const int lag = std::min(cfg.max_lag, N / 4 - 1);
      const WhitenessReport white = residual_whiteness(test_res, lag);
      rep.residual_acf = white.acf;
      rep.outside_fraction = white.outside_fraction;
      rep.acf_bound = white.bound;
    };
    std::visit(eval, model);

    sel.reports.push_back(std::move(rep));
    sel.models.push_back(std::move(model));
  }

  // near-ties resolve toward smaller p
  double best_ol = std::numeric_limits<double>::infinity();
  double best_aic = std::numeric_limits<double>::infinity();
  for (const auto& rep : sel.reports) {
    best_ol = std::min(best_ol, rep.eps_ol);
    if (std::isfinite(rep.aic)) best_aic = std::min(best_aic, rep.aic);
  }
  const double ol_threshold = best_ol * (1.0 + cfg.tie_rel) + 1e-15;
  const double aic_threshold = best_aic + 1e-9 * (1.0 + std::abs(best_aic));
  sel.p_ol = sel.reports.front().p;
  sel.p_aic = sel.reports.front().p;
  for (const auto& rep : sel.reports) {
    if (rep.eps_ol <= ol_threshold) {
      sel.p_ol = rep.p;
      break;
    }
  }
  for (const auto& rep : sel.reports) {
    if (std::isfinite(rep.aic) && rep.aic <= aic_threshold) {
      sel.p_aic = rep.p;
      break;
    }
  }
  return sel;
}

}  // namespace faceplate
