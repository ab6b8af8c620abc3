#include "faceplate/zernike.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "faceplate/errors.hpp"
#include "faceplate/rng.hpp"

using namespace faceplate;

TEST_CASE("Noll enumeration starts at tip and excludes piston") {
  const auto two = noll_modes(2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].n == 1);
  CHECK(two[0].m == 1);
  CHECK(two[0].noll_j == 2);
  CHECK(two[1].n == 1);
  CHECK(two[1].m == -1);
  CHECK(two[1].noll_j == 3);

  const auto three = noll_modes(3);
  CHECK(three[2].n == 2);
  CHECK(three[2].m == 0);
  CHECK(three[2].noll_j == 4);

  const auto thirty_two = noll_modes(32);
  CHECK(thirty_two.back().noll_j == 33);
  CHECK(thirty_two.back().n == 7);

  // round-trip against the enumeration oracle
  for (const auto& mode : thirty_two) {
    CHECK(noll_index(mode.n, mode.m) == mode.noll_j);
    const ModeIndex back = mode_from_noll(mode.noll_j);
    CHECK(back.n == mode.n);
    CHECK(back.m == mode.m);
  }
}

TEST_CASE("mode name parsing") {
  const ModeIndex defocus = parse_mode_name("Z2^0");
  CHECK(defocus.noll_j == 4);
  const ModeIndex trefoil = parse_mode_name("Z3^-3");
  CHECK(trefoil.noll_j == 9);
  CHECK(mode_name(defocus) == "Z2^0");
  CHECK_THROWS_AS((void)parse_mode_name("Z0^0"), ConfigError);
  CHECK_THROWS_AS((void)parse_mode_name("Z2^1"), ConfigError);  // parity violation
  CHECK_THROWS_AS((void)parse_mode_name("defocus"), ConfigError);
}

TEST_CASE("pointwise values: defocus at the center, azimuthal zeros, tip plane") {
  const ModeIndex defocus{2, 0, 4};
  CHECK(zernike_eval(defocus, 0.0, 0.0) == doctest::Approx(-std::sqrt(3.0)).epsilon(1e-12));

  for (const auto& mode : noll_modes(20))
    if (mode.m != 0) CHECK(zernike_eval(mode, 0.0, 0.0) == doctest::Approx(0.0).epsilon(1e-15));

  // tip: 2 rho cos(theta) = 2 x / norm_radius
  const ModeIndex tip{1, 1, 2};
  const double norm_radius = 0.6;
  const std::vector<Eigen::Vector2d> pts = {{0.3, 0.1}, {-0.2, 0.4}, {0.0, -0.5}};
  const Eigen::VectorXd y = synthesize_target(tip, 2.5e-6, pts, norm_radius);
  for (int i = 0; i < y.size(); ++i)
    CHECK(y(i) == doctest::Approx(2.5e-6 * 2.0 * pts[i].x() / norm_radius).epsilon(1e-12));
}

TEST_CASE("Monte-Carlo orthonormality over the unit disk") {
  const auto modes = noll_modes(32);
  const int samples = 1000000;
  CounterRng rng(2024, "disk");
  Eigen::MatrixXd Z(samples, modes.size());
  for (int i = 0; i < samples; ++i) {
    const double rho = std::sqrt(rng.uniform01());
    const double theta = 2.0 * std::numbers::pi * rng.uniform01();
    for (std::size_t k = 0; k < modes.size(); ++k)
      Z(i, static_cast<Eigen::Index>(k)) =
          zernike_eval(modes[k], rho * std::cos(theta), rho * std::sin(theta));
  }
  const Eigen::MatrixXd gram = Z.transpose() * Z / static_cast<double>(samples);
  for (int a = 0; a < gram.rows(); ++a)
    for (int b = 0; b < gram.cols(); ++b)
      CHECK(std::abs(gram(a, b) - (a == b ? 1.0 : 0.0)) <= 0.01);
}

TEST_CASE("rotation mixes only the matching (cos, sin) pair") {
  const double phi = 0.37;
  CounterRng rng(7, "rotation");
  for (int n = 1; n <= 5; ++n) {
    for (int m = 1; m <= n; ++m) {
      if ((n - m) % 2 != 0) continue;
      const ModeIndex cos_mode{n, m, noll_index(n, m)};
      const ModeIndex sin_mode{n, -m, noll_index(n, -m)};
      for (int trial = 0; trial < 20; ++trial) {
        const double rho = std::sqrt(rng.uniform01());
        const double th = 2.0 * std::numbers::pi * rng.uniform01();
        const double x = rho * std::cos(th), y = rho * std::sin(th);
        const double xr = std::cos(phi) * x - std::sin(phi) * y;
        const double yr = std::sin(phi) * x + std::cos(phi) * y;
        // evaluating at the rotated point adds phi to theta
        const double expected_cos = std::cos(m * phi) * zernike_eval(cos_mode, x, y) -
                                    std::sin(m * phi) * zernike_eval(sin_mode, x, y);
        const double expected_sin = std::sin(m * phi) * zernike_eval(cos_mode, x, y) +
                                    std::cos(m * phi) * zernike_eval(sin_mode, x, y);
        CHECK(zernike_eval(cos_mode, xr, yr) == doctest::Approx(expected_cos).epsilon(1e-10));
        CHECK(zernike_eval(sin_mode, xr, yr) == doctest::Approx(expected_sin).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("eval_basis rejects points outside the normalization radius") {
  const std::vector<Eigen::Vector2d> pts = {{0.7, 0.0}};
  CHECK_THROWS_AS((void)eval_basis(pts, noll_modes(3), 0.6), ConfigError);
}

TEST_CASE("projection matrix matches the dense normal-equation oracle") {
  CounterRng rng(42, "proj");
  Eigen::MatrixXd Z(100, 5);
  for (int i = 0; i < Z.rows(); ++i)
    for (int j = 0; j < Z.cols(); ++j) Z(i, j) = rng.normal();
  Eigen::VectorXd y(Z.rows());
  for (int i = 0; i < y.size(); ++i) y(i) = rng.normal();

  const Eigen::MatrixXd C1 = projection_matrix(Z);
  const Eigen::VectorXd oracle =
      (Z.transpose() * Z).ldlt().solve(Z.transpose() * y);
  const Eigen::VectorXd got = C1 * y;
  CHECK((got - oracle).norm() <= 1e-10 * oracle.norm());

  // exact representability and orthogonal-complement annihilation
  Eigen::VectorXd q0(Z.cols());
  for (int i = 0; i < q0.size(); ++i) q0(i) = rng.normal();
  CHECK((C1 * (Z * q0) - q0).norm() <= 1e-10 * q0.norm());

  Eigen::VectorXd resid = y - Z * oracle;  // orthogonal to range(Z)
  CHECK((C1 * resid).norm() <= 1e-9 * resid.norm());

  // rank-deficient basis must be rejected
  Eigen::MatrixXd Zdup(100, 6);
  Zdup << Z, Z.col(0);
  CHECK_THROWS_AS((void)projection_matrix(Zdup), NumericalError);
}

TEST_CASE("ZernikeMap: C1 Z = I and projection round-trip on a grid sample") {
  std::vector<Eigen::Vector2d> pts;
  const double norm_radius = 0.6;
  for (double x = -0.6; x <= 0.6; x += 0.1)
    for (double y = -0.6; y <= 0.6; y += 0.1)
      if (x * x + y * y <= norm_radius * norm_radius) pts.emplace_back(x, y);

  const ZernikeMap map = make_zernike_map(pts, 10, norm_radius);
  const Eigen::MatrixXd eye = map.C1 * map.Z;
  CHECK((eye - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() <= 1e-8);

  const Eigen::VectorXd target = synthesize_target(map.modes[3], 1e-6, pts, norm_radius);
  const Eigen::VectorXd coeffs = map.C1 * target;
  for (int k = 0; k < coeffs.size(); ++k)
    CHECK(std::abs(coeffs(k) - (k == 3 ? 1e-6 : 0.0)) <= 1e-8 * 1e-6);

  CHECK(synthesize_target(map.modes[0], 0.0, pts, norm_radius).norm() == 0.0);
}
