#include "faceplate/zernike.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <Eigen/QR>

#include "faceplate/errors.hpp"

namespace faceplate {

namespace {

void check_mode(int n, int m) {
  if (n < 0 || std::abs(m) > n || (n - std::abs(m)) % 2 != 0)
    throw ConfigError("invalid Zernike mode (n=" + std::to_string(n) +
                      ", m=" + std::to_string(m) + ")");
  if (n > 40) throw ConfigError("Zernike radial degree too large");
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double radial_poly(int n, int m_abs, double rho) {
  double value = 0.0;
  for (int s = 0; s <= (n - m_abs) / 2; ++s) {
    const double coef = ((s % 2 == 0) ? 1.0 : -1.0) * factorial(n - s) /
                        (factorial(s) * factorial((n + m_abs) / 2 - s) *
                         factorial((n - m_abs) / 2 - s));
    value += coef * std::pow(rho, n - 2 * s);
  }
  return value;
}

}  // namespace

// Noll's assignment: within radial degree n, |m| ascends and the cos/sin
// member getting the smaller index alternates with n mod 4; m = 0 modes take
// the +1 slot. Reproduces j=1 piston, j=2/3 tip/tilt, j=4 defocus, ...
int noll_index(int n, int m) {
  check_mode(n, m);
  const int base = n * (n + 1) / 2 + std::abs(m);
  int c = 0;
  if (m == 0 || (m > 0 && n % 4 >= 2) || (m < 0 && n % 4 <= 1)) c = 1;
  return base + c;
}

ModeIndex mode_from_noll(int j) {
  if (j < 1) throw ConfigError("Noll index must be >= 1");
  int n = 0;
  while ((n + 1) * (n + 2) / 2 < j) ++n;
  for (int m_abs = n % 2; m_abs <= n; m_abs += 2) {
    if (m_abs == 0) {
      if (noll_index(n, 0) == j) return {n, 0, j};
    } else {
      if (noll_index(n, m_abs) == j) return {n, m_abs, j};
      if (noll_index(n, -m_abs) == j) return {n, -m_abs, j};
    }
  }
  throw NumericalError("Noll enumeration failed for j=" + std::to_string(j));
}

std::vector<ModeIndex> noll_modes(int l) {
  if (l < 1) throw ConfigError("zernike_count must be >= 1");
  std::vector<ModeIndex> modes;
  modes.reserve(l);
  for (int j = 2; j <= l + 1; ++j) modes.push_back(mode_from_noll(j));
  return modes;
}

ModeIndex parse_mode_name(const std::string& name) {
  int n = 0, m = 0;
  if (std::sscanf(name.c_str(), "Z%d^%d", &n, &m) != 2)
    throw ConfigError("cannot parse Zernike mode name \"" + name + "\" (expected Zn^m)");
  if (n == 0 && m == 0) throw ConfigError("piston (Z0^0) is excluded");
  check_mode(n, m);
  return {n, m, noll_index(n, m)};
}

std::string mode_name(const ModeIndex& mode) {
  return "Z" + std::to_string(mode.n) + "^" + std::to_string(mode.m);
}

double zernike_eval(const ModeIndex& mode, double x, double y) {
  const double rho = std::hypot(x, y);
  const double theta = std::atan2(y, x);
  const int m_abs = std::abs(mode.m);
  const double norm = mode.m == 0 ? std::sqrt(mode.n + 1.0) : std::sqrt(2.0 * (mode.n + 1.0));
  double ang = 1.0;
  if (mode.m > 0) ang = std::cos(m_abs * theta);
  if (mode.m < 0) ang = std::sin(m_abs * theta);
  return norm * radial_poly(mode.n, m_abs, rho) * ang;
}

Eigen::MatrixXd eval_basis(const std::vector<Eigen::Vector2d>& points,
                           const std::vector<ModeIndex>& modes, double norm_radius) {
  if (!(norm_radius > 0)) throw ConfigError("norm_radius must be positive");
  Eigen::MatrixXd Z(points.size(), modes.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = points[i].x() / norm_radius;
    const double y = points[i].y() / norm_radius;
    if (x * x + y * y > 1.0 + 1e-9)
      throw ConfigError("observation point outside the normalization radius");
    for (std::size_t k = 0; k < modes.size(); ++k)
      Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          zernike_eval(modes[k], x, y);
  }
  return Z;
}

Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& Z) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Z);
  if (cod.rank() < Z.cols())
    throw NumericalError("insufficient observation coverage: sampled Zernike basis is rank-deficient");
  return cod.pseudoInverse();
}

ZernikeMap make_zernike_map(const std::vector<Eigen::Vector2d>& points, int l,
                            double norm_radius) {
  ZernikeMap map;
  map.modes = noll_modes(l);
  map.Z = eval_basis(points, map.modes, norm_radius);
  map.C1 = projection_matrix(map.Z);
  map.norm_radius = norm_radius;
  return map;
}

Eigen::VectorXd synthesize_target(const ModeIndex& mode, double amplitude,
                                  const std::vector<Eigen::Vector2d>& points,
                                  double norm_radius) {
  check_mode(mode.n, mode.m);
  Eigen::VectorXd y(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    y(static_cast<Eigen::Index>(i)) =
        amplitude * zernike_eval(mode, points[i].x() / norm_radius, points[i].y() / norm_radius);
  return y;
}

}  // namespace faceplate
