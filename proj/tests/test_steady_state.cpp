#include "faceplate/steady_state.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <cmath>

#include "doctest.h"
#include "faceplate/errors.hpp"
#include "faceplate/rng.hpp"

using namespace faceplate;

namespace {

SecondOrderModel coarse_model(double node_pitch = 0.25, int actuators = 5) {
  MaterialSpec mat;
  ActuatorSpec act;
  const PlateGrid grid = build_grid(mat, node_pitch, BoundaryMode::free_edge);
  ActuatorLayout layout;
  layout.positions = {{0.0, 0.0}, {0.25, 0.0}, {-0.25, 0.0}, {0.0, 0.25}, {0.0, -0.25}};
  layout.positions.resize(actuators);
  return assemble_model(grid, mat, act, layout, 0.6);
}

Eigen::VectorXd min_norm_oracle(const AugmentedSystem& aug) {
  const Eigen::MatrixXd S = Eigen::MatrixXd(aug.S);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(S);
  return cod.solve(aug.g);
}

}  // namespace

TEST_CASE("augmented system block layout on a toy model") {
  // n = 2, m = 1, r = 1 by hand
  SecondOrderModel model;
  std::vector<Eigen::Triplet<double>> t3 = {{0, 0, 4.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 3.0}};
  model.M3.resize(2, 2);
  model.M3.setFromTriplets(t3.begin(), t3.end());
  model.M1 = model.M3;  // unused here
  std::vector<Eigen::Triplet<double>> tb = {{1, 0, 1.0}};
  model.B.resize(2, 1);
  model.B.setFromTriplets(tb.begin(), tb.end());
  std::vector<Eigen::Triplet<double>> tc = {{0, 0, 1.0}};
  model.C.resize(1, 2);
  model.C.setFromTriplets(tc.begin(), tc.end());

  Eigen::VectorXd y_d(1);
  y_d << 2.5;
  const AugmentedSystem aug = assemble_augmented(model, y_d);
  REQUIRE(aug.S.rows() == 3);
  REQUIRE(aug.S.cols() == 3);
  const Eigen::MatrixXd S = Eigen::MatrixXd(aug.S);
  CHECK(S(0, 0) == 4.0);
  CHECK(S(0, 1) == -1.0);
  CHECK(S(1, 1) == 3.0);
  CHECK(S(1, 2) == -1.0);  // -B
  CHECK(S(2, 0) == 1.0);   // C
  CHECK(S(2, 2) == 0.0);
  CHECK(aug.g.head(2).norm() == 0.0);
  CHECK(aug.g(2) == 2.5);
  CHECK(aug.S.nonZeros() ==
        model.M3.nonZeros() + model.B.nonZeros() + model.C.nonZeros());

  Eigen::VectorXd wrong(2);
  CHECK_THROWS_AS((void)assemble_augmented(model, wrong), ConfigError);

  // zero target -> zero right-hand side and zero solution
  const AugmentedSystem zero = assemble_augmented(model, Eigen::VectorXd::Zero(1));
  CHECK(zero.g.norm() == 0.0);
  const SteadyStateSolution sol = solve_steady_state(zero);
  CHECK(sol.u.norm() == 0.0);
  CHECK(sol.z.norm() == 0.0);
  CHECK(sol.residual_norm == 0.0);
}

TEST_CASE("solver matches the dense minimum-norm pseudo-inverse oracle") {
  const SecondOrderModel model = coarse_model();
  const auto points = model.obs_points();
  const ModeIndex defocus{2, 0, 4};
  const Eigen::VectorXd y_d = synthesize_target(defocus, 1e-6, points, 0.6);

  const AugmentedSystem aug = assemble_augmented(model, y_d);
  const SteadyStateSolution sol = solve_steady_state(aug, 1e-10);
  const Eigen::VectorXd w_star = min_norm_oracle(aug);

  const Eigen::VectorXd u_star = w_star.tail(model.m());
  CHECK((sol.u - u_star).norm() <= 1e-8 * u_star.norm());
  CHECK((sol.z - w_star.head(model.n())).norm() <= 1e-8 * w_star.head(model.n()).norm());
  CHECK(sol.certificate <= 1e-10);

  // y_star really is C z
  CHECK((sol.y_star - model.C * sol.z).norm() <= 1e-14);
}

TEST_CASE("solution scales linearly with the target") {
  const SecondOrderModel model = coarse_model();
  const auto points = model.obs_points();
  const Eigen::VectorXd y1 = synthesize_target({2, 0, 4}, 1e-6, points, 0.6);
  const Eigen::VectorXd y2 = synthesize_target({2, 2, 6}, 1e-6, points, 0.6);

  const SteadyStateSolution a = solve_steady_state(assemble_augmented(model, y1));
  const SteadyStateSolution b = solve_steady_state(assemble_augmented(model, y2));
  const SteadyStateSolution ab =
      solve_steady_state(assemble_augmented(model, 2.0 * y1 - 0.5 * y2));

  CHECK((ab.u - (2.0 * a.u - 0.5 * b.u)).norm() <= 1e-7 * ab.u.norm());
  CHECK((ab.z - (2.0 * a.z - 0.5 * b.z)).norm() <= 1e-7 * ab.z.norm());

  // alpha-scaled target
  const SteadyStateSolution s3 = solve_steady_state(assemble_augmented(model, 3.0 * y1));
  CHECK((s3.u - 3.0 * a.u).norm() <= 1e-7 * s3.u.norm());

  // e is invariant under positive scaling
  CHECK(control_error(y1, a.y_star) ==
        doctest::Approx(control_error(3.0 * y1, s3.y_star)).epsilon(1e-9));
}

TEST_CASE("apply_control basics and consistency with the solver") {
  const SecondOrderModel model = coarse_model();
  CHECK(apply_control(model, Eigen::VectorXd::Zero(model.m())).norm() == 0.0);

  const auto points = model.obs_points();
  const Eigen::VectorXd y_d = synthesize_target({2, 0, 4}, 1e-6, points, 0.6);
  const SteadyStateSolution sol = solve_steady_state(assemble_augmented(model, y_d));
  const Eigen::VectorXd replay = apply_control(model, sol.u);
  // the joint least-squares z and the direct M3 \ B u differ only through the
  // tiny weighted top-block residual; agreement is far inside the control error
  CHECK((replay - sol.y_star).norm() <= 1e-10);  // absolute, meters (target is 1e-6)
  CHECK((replay - sol.y_star).norm() <= 1e-5 * sol.y_star.norm());
}

TEST_CASE("apply_control rejects a singular stiffness (no actuators)") {
  MaterialSpec mat;
  ActuatorSpec act;
  const PlateGrid grid = build_grid(mat, 0.25, BoundaryMode::free_edge);
  SecondOrderModel model;
  model.grid = grid;
  model.M3 = assemble_bending_stiffness(grid, mat);  // rank deficiency 3
  model.M1 = model.M3;
  model.B.resize(grid.size(), 1);
  std::vector<Eigen::Triplet<double>> tb = {{0, 0, 1.0}};
  model.B.setFromTriplets(tb.begin(), tb.end());
  model.C.resize(1, grid.size());
  std::vector<Eigen::Triplet<double>> tc = {{0, 0, 1.0}};
  model.C.setFromTriplets(tc.begin(), tc.end());

  Eigen::VectorXd u(1);
  u << 1.0;
  CHECK_THROWS_AS((void)apply_control(model, u), NumericalError);
}

TEST_CASE("control_error trivial values") {
  Eigen::VectorXd y(3);
  y << 1.0, -2.0, 0.5;
  CHECK(control_error(y, y) == 0.0);
  CHECK(control_error(y, Eigen::VectorXd::Zero(3)) == 1.0);
  CHECK(control_error(y, 2.0 * y) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS((void)control_error(Eigen::VectorXd::Zero(3), y), ConfigError);
}

TEST_CASE("dense influence: columns, least-squares equivalence, reciprocity") {
  const SecondOrderModel model = coarse_model();
  const Eigen::MatrixXd influence = dense_influence(model);
  REQUIRE(influence.rows() == model.r());
  REQUIRE(influence.cols() == model.m());

  // column j equals apply_control(e_j)
  for (int j = 0; j < model.m(); ++j) {
    Eigen::VectorXd ej = Eigen::VectorXd::Zero(model.m());
    ej(j) = 1.0;
    CHECK((influence.col(j) - apply_control(model, ej)).norm() <=
          1e-10 * influence.col(j).norm());
  }

  // least squares on the influence matrix reproduces the augmented solve
  const auto points = model.obs_points();
  const Eigen::VectorXd y_d = synthesize_target({2, 0, 4}, 1e-6, points, 0.6);
  const SteadyStateSolution sol = solve_steady_state(assemble_augmented(model, y_d));
  const Eigen::VectorXd u_ls =
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(influence).solve(y_d);
  CHECK((sol.u - u_ls).norm() <= 1e-6 * u_ls.norm());

  // reciprocity: C restricted to actuator nodes makes the influence symmetric
  SecondOrderModel restricted = model;
  std::vector<Eigen::Triplet<double>> tc;
  for (int a = 0; a < model.m(); ++a)
    tc.emplace_back(a, model.layout.node_index[a], 1.0);
  restricted.C.resize(model.m(), model.n());
  restricted.C.setFromTriplets(tc.begin(), tc.end());
  restricted.obs_nodes = restricted.layout.node_index;
  const Eigen::MatrixXd sym = dense_influence(restricted);
  CHECK((sym - sym.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * sym.cwiseAbs().maxCoeff());

  // size guard
  SecondOrderModel big = model;
  big.M1.resize(5001, 5001);
  big.M3.resize(5001, 5001);
  CHECK_THROWS_AS((void)dense_influence(big), ConfigError);
}

TEST_CASE("sweep: sorted rows, certificate, superset monotonicity, symmetry") {
  MaterialSpec mat;
  ActuatorSpec act;
  const PlateGrid grid = build_grid(mat, 0.1, BoundaryMode::free_edge);

  ActuatorLayout five;
  five.positions = {{0.0, 0.0}, {0.2, 0.0}, {-0.2, 0.0}, {0.0, 0.2}, {0.0, -0.2}};
  ActuatorLayout thirteen = five;
  for (auto pos : {Eigen::Vector2d{0.4, 0.0}, Eigen::Vector2d{-0.4, 0.0},
                   Eigen::Vector2d{0.0, 0.4}, Eigen::Vector2d{0.0, -0.4},
                   Eigen::Vector2d{0.2, 0.2}, Eigen::Vector2d{-0.2, 0.2},
                   Eigen::Vector2d{0.2, -0.2}, Eigen::Vector2d{-0.2, -0.2}})
    thirteen.positions.push_back(pos);

  const SecondOrderModel small = assemble_model(grid, mat, act, five, 0.6);
  const SecondOrderModel large = assemble_model(grid, mat, act, thirteen, 0.6);
  const ZernikeMap zmap = make_zernike_map(small.obs_points(), 6, 0.6);

  // defocus, astigmatism, coma: none exactly reachable, so the errors are
  // geometry-driven rather than solver-floor noise
  const std::vector<ModeIndex> modes = {zmap.modes[4], zmap.modes[2], zmap.modes[5]};
  const auto rows_small = sweep_modes(small, zmap, modes, 1e-6);
  const auto rows_large = sweep_modes(large, zmap, modes, 1e-6);

  REQUIRE(rows_small.size() == 3);
  CHECK(rows_small[0].mode.noll_j < rows_small[1].mode.noll_j);
  CHECK(rows_small[1].mode.noll_j < rows_small[2].mode.noll_j);

  for (std::size_t i = 0; i < rows_small.size(); ++i) {
    CHECK(!rows_small[i].failed);
    CHECK(rows_small[i].e > 1e-6);  // genuinely unreachable targets
    // larger actuator set cannot do worse (same targets, same tolerance)
    CHECK(rows_large[i].e <= rows_small[i].e * (1.0 + 1e-6) + 1e-9);
  }

  // defocus force pattern inherits the 90-degree lattice symmetry
  const auto defocus_row = sweep_modes(small, zmap, {zmap.modes[2]}, 1e-6).front();
  REQUIRE(defocus_row.mode.noll_j == 4);
  const Eigen::VectorXd& u = defocus_row.u;
  CHECK(u(1) == doctest::Approx(u(2)).epsilon(1e-6));
  CHECK(u(1) == doctest::Approx(u(3)).epsilon(1e-6));
  CHECK(u(1) == doctest::Approx(u(4)).epsilon(1e-6));

  CHECK_THROWS_AS((void)sweep_modes(small, zmap, modes, 0.0), ConfigError);
}

TEST_CASE("five-actuator pattern: central bump with depressed lobes at the pulls") {
  // forces 1.5, -0.5, 1, -0.5, 1 N on actuators 1..5 (cross arrangement)
  MaterialSpec mat;
  ActuatorSpec act;
  const PlateGrid grid = build_grid(mat, 0.1, BoundaryMode::free_edge);
  ActuatorLayout five;
  five.positions = {{0.0, 0.0}, {0.2, 0.0}, {0.4, 0.0}, {-0.2, 0.0}, {-0.4, 0.0}};
  // keep the rigid tilt about the x-axis supported
  five.positions.emplace_back(0.0, 0.4);
  five.positions.emplace_back(0.0, -0.4);
  const SecondOrderModel model = assemble_model(grid, mat, act, five, 0.6);

  Eigen::VectorXd u = Eigen::VectorXd::Zero(7);
  u.head(5) << 1.5, -0.5, 1.0, -0.5, 1.0;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(model.M3);
  REQUIRE(solver.info() == Eigen::Success);
  const Eigen::VectorXd z = solver.solve(model.B * u);

  const int center = model.grid.node_at(0, 0);
  const int push_right = model.grid.node_at(4, 0);   // +1 N at x = 0.4
  const int pull_right = model.grid.node_at(2, 0);   // -0.5 N at x = 0.2
  const int pull_left = model.grid.node_at(-2, 0);
  REQUIRE(center >= 0);
  CHECK(z(center) > 0.0);  // bump under the 1.5 N push
  // the pulled actuators sit in local depressions between the pushes
  CHECK(z(pull_right) < z(center));
  CHECK(z(pull_right) < z(push_right));
  CHECK(z(pull_left) < z(center));

  // the observed patch reproduces the same central deformation
  const Eigen::VectorXd y = apply_control(model, u);
  for (int rowi = 0; rowi < model.r(); ++rowi)
    if (model.obs_nodes[rowi] == center)
      CHECK(y(rowi) == doctest::Approx(z(center)).epsilon(1e-9));
}
