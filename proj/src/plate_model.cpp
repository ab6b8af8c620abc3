#include "faceplate/plate_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

#include "faceplate/errors.hpp"

namespace faceplate {

namespace {

// Relative slack for disk-inclusion tests so lattice points that lie exactly
// on the radius (common with round pitches) are kept despite rounding.
constexpr double kRadiusSlack = 1e-9;

bool inside_disk(double x, double y, double radius) {
  return x * x + y * y <= radius * radius * (1.0 + kRadiusSlack);
}

}  // namespace

double MaterialSpec::flexural_rigidity() const {
  const double t3 = thickness * thickness * thickness;
  return youngs_modulus * t3 / (12.0 * (1.0 - poisson_ratio * poisson_ratio));
}

void MaterialSpec::validate() const {
  if (!(youngs_modulus > 0)) throw ConfigError("material.youngs_modulus must be positive");
  if (!(density > 0)) throw ConfigError("material.density must be positive");
  if (!(poisson_ratio >= 0 && poisson_ratio < 0.5))
    throw ConfigError("material.poisson_ratio must lie in [0, 0.5)");
  if (!(thickness > 0)) throw ConfigError("material.thickness must be positive");
  if (!(plate_radius > 0)) throw ConfigError("material.plate_radius must be positive");
}

void ActuatorSpec::validate() const {
  if (!(stiffness > 0)) throw ConfigError("actuator.stiffness must be positive");
  if (!(mass > 0)) throw ConfigError("actuator.mass must be positive");
  if (!(damping >= 0)) throw ConfigError("actuator.damping must be non-negative");
  if (!(pitch > 0)) throw ConfigError("actuator.pitch must be positive");
  if (!(inclusion_radius > 0)) throw ConfigError("actuator.inclusion_radius must be positive");
  if (!(pitch <= 2.0 * inclusion_radius))
    throw ConfigError("actuator.pitch must not exceed twice the inclusion radius");
}

BoundaryMode boundary_mode_from_string(const std::string& s) {
  if (s == "free") return BoundaryMode::free_edge;
  if (s == "clamped") return BoundaryMode::clamped;
  throw ConfigError("grid.boundary must be \"free\" or \"clamped\", got \"" + s + "\"");
}

std::string to_string(BoundaryMode mode) {
  return mode == BoundaryMode::free_edge ? "free" : "clamped";
}

std::int64_t PlateGrid::pack(int i, int j) {
  constexpr std::int64_t off = 1 << 28;
  return ((static_cast<std::int64_t>(i) + off) << 30) | (static_cast<std::int64_t>(j) + off);
}

int PlateGrid::node_at(int i, int j) const {
  auto it = index.find(pack(i, j));
  return it == index.end() ? -1 : it->second;
}

ActuatorLayout build_layout(const ActuatorSpec& act) {
  act.validate();
  ActuatorLayout layout;
  const int span = static_cast<int>(std::floor(act.inclusion_radius / act.pitch)) + 1;
  for (int i = -span; i <= span; ++i) {
    for (int j = -span; j <= span; ++j) {
      const double x = i * act.pitch;
      const double y = j * act.pitch;
      if (inside_disk(x, y, act.inclusion_radius)) layout.positions.emplace_back(x, y);
    }
  }
  if (layout.positions.empty()) throw ConfigError("no actuators: inclusion radius admits no lattice point");
  return layout;
}

PlateGrid build_grid(const MaterialSpec& mat, double node_pitch, BoundaryMode boundary) {
  mat.validate();
  if (!(node_pitch > 0)) throw ConfigError("grid.node_pitch must be positive");
  if (node_pitch > mat.plate_radius / 2.0)
    throw ConfigError("pitch too coarse: node_pitch must not exceed plate_radius/2");

  PlateGrid grid;
  grid.node_pitch = node_pitch;
  grid.plate_radius = mat.plate_radius;
  grid.boundary = boundary;
  const int span = static_cast<int>(std::floor(mat.plate_radius / node_pitch)) + 1;
  for (int i = -span; i <= span; ++i) {
    for (int j = -span; j <= span; ++j) {
      const double x = i * node_pitch;
      const double y = j * node_pitch;
      if (!inside_disk(x, y, mat.plate_radius)) continue;
      const int row = grid.size();
      grid.nodes.emplace_back(x, y);
      grid.lattice.emplace_back(i, j);
      grid.index.emplace(PlateGrid::pack(i, j), row);
    }
  }
  return grid;
}

namespace {

struct Stencil {
  int idx[4];
  double coef[4];
  int len = 0;

  void add(int node, double c) {
    idx[len] = node;
    coef[len] = c;
    ++len;
  }
};

void accumulate_outer(std::vector<Eigen::Triplet<double>>& trips, const Stencil& a,
                      const Stencil& b, double weight) {
  for (int p = 0; p < a.len; ++p)
    for (int q = 0; q < b.len; ++q)
      trips.emplace_back(a.idx[p], b.idx[q], weight * a.coef[p] * b.coef[q]);
}

}  // namespace

Eigen::SparseMatrix<double> assemble_bending_stiffness(const PlateGrid& grid,
                                                       const MaterialSpec& mat) {
  if (grid.size() == 0) throw ConfigError("empty grid");
  const double d = grid.node_pitch;
  const double D = mat.flexural_rigidity();
  const double nu = mat.poisson_ratio;
  const double inv_d2 = 1.0 / (d * d);
  const bool clamped = grid.boundary == BoundaryMode::clamped;

  // In clamped mode lattice points beyond the disk act as zero-valued ghosts:
  // every energy term touching at least one real node is kept, which enforces
  // w ~ 0 and slope ~ 0 across the rim. In free mode only fully interior
  // stencils contribute and the natural (free-edge) conditions emerge.
  const int span = static_cast<int>(std::floor(grid.plate_radius / d)) + 2;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(grid.size()) * 16);

  // second-difference stencil along one axis, centered at (i, j)
  auto second_diff = [&](int i, int j, int di, int dj, Stencil& s, bool& active) {
    const int c0 = grid.node_at(i - di, j - dj);
    const int c1 = grid.node_at(i, j);
    const int c2 = grid.node_at(i + di, j + dj);
    if (clamped) {
      active = (c0 >= 0 || c1 >= 0 || c2 >= 0);
    } else {
      active = (c0 >= 0 && c1 >= 0 && c2 >= 0);
    }
    if (!active) return;
    if (c0 >= 0) s.add(c0, inv_d2);
    if (c1 >= 0) s.add(c1, -2.0 * inv_d2);
    if (c2 >= 0) s.add(c2, inv_d2);
  };

  const double node_weight = D * d * d;  // Hessian scale of (D d^2/2) * quadratic
  for (int i = -span; i <= span; ++i) {
    for (int j = -span; j <= span; ++j) {
      Stencil sxx, syy;
      bool ax = false, ay = false;
      second_diff(i, j, 1, 0, sxx, ax);
      second_diff(i, j, 0, 1, syy, ay);
      if (ax && sxx.len > 0) accumulate_outer(trips, sxx, sxx, node_weight);
      if (ay && syy.len > 0) accumulate_outer(trips, syy, syy, node_weight);
      if (ax && ay && sxx.len > 0 && syy.len > 0) {
        accumulate_outer(trips, sxx, syy, nu * node_weight);
        accumulate_outer(trips, syy, sxx, nu * node_weight);
      }

      // cross-derivative cell term at cell (i, j)-(i+1, j+1)
      const int n00 = grid.node_at(i, j);
      const int n10 = grid.node_at(i + 1, j);
      const int n01 = grid.node_at(i, j + 1);
      const int n11 = grid.node_at(i + 1, j + 1);
      const bool cell_active = clamped ? (n00 >= 0 || n10 >= 0 || n01 >= 0 || n11 >= 0)
                                       : (n00 >= 0 && n10 >= 0 && n01 >= 0 && n11 >= 0);
      if (cell_active) {
        Stencil sxy;
        if (n00 >= 0) sxy.add(n00, inv_d2);
        if (n10 >= 0) sxy.add(n10, -inv_d2);
        if (n01 >= 0) sxy.add(n01, -inv_d2);
        if (n11 >= 0) sxy.add(n11, inv_d2);
        if (sxy.len > 0) accumulate_outer(trips, sxy, sxy, 2.0 * (1.0 - nu) * node_weight);
      }
    }
  }

  Eigen::SparseMatrix<double> K(grid.size(), grid.size());
  K.setFromTriplets(trips.begin(), trips.end());
  K.makeCompressed();

  if (clamped) {
    // Pin the boundary layer (nodes within half a pitch of the rim): zero its
    // rows/columns and put a K-scale entry on the diagonal. Together with the
    // ghost extension this brackets the physical clamp circle; the remaining
    // offset is O(d) with a small constant (about +2.5% center deflection on
    // the reference disk at d/R = 0.025, converging from above).
    const std::vector<bool> pinned = clamped_pinned_nodes(grid);
    double max_diag = 0.0;
    for (int k = 0; k < grid.size(); ++k) max_diag = std::max(max_diag, K.coeff(k, k));
    std::vector<Eigen::Triplet<double>> kept;
    kept.reserve(static_cast<std::size_t>(K.nonZeros()));
    for (int col = 0; col < K.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it)
        if (!pinned[it.row()] && !pinned[it.col()])
          kept.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < grid.size(); ++k)
      if (pinned[k]) kept.emplace_back(k, k, max_diag);
    K.setZero();
    K.setFromTriplets(kept.begin(), kept.end());
    K.makeCompressed();
  }
  return K;
}

std::vector<bool> clamped_pinned_nodes(const PlateGrid& grid) {
  std::vector<bool> pinned(grid.size(), false);
  if (grid.boundary != BoundaryMode::clamped) return pinned;
  const double rim = grid.plate_radius - 0.5 * grid.node_pitch;
  for (int k = 0; k < grid.size(); ++k)
    if (grid.nodes[k].norm() > rim) pinned[k] = true;
  return pinned;
}

ActuatorLayout attach_layout(const PlateGrid& grid, const ActuatorLayout& layout) {
  ActuatorLayout out = layout;
  out.node_index.assign(layout.positions.size(), -1);
  for (std::size_t a = 0; a < layout.positions.size(); ++a) {
    // nearest-node search; grids are small enough that exhaustive scan with a
    // deterministic tie-break beats any cleverness
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int k = 0; k < grid.size(); ++k) {
      const double dist = (grid.nodes[k] - layout.positions[a]).squaredNorm();
      if (dist < best - 1e-18) {
        best = dist;
        best_idx = k;
      }
    }
    if (best_idx < 0) throw ConfigError("actuator has no grid node");
    out.node_index[a] = best_idx;
  }
  return out;
}

SecondOrderModel assemble_model(const PlateGrid& grid, const MaterialSpec& mat,
                                const ActuatorSpec& act, const ActuatorLayout& layout,
                                double obs_radius, const RayleighDamping& rayleigh) {
  mat.validate();
  if (!(obs_radius > 0)) throw ConfigError("observation.obs_radius must be positive");
  if (obs_radius >= mat.plate_radius)
    std::fprintf(stderr, "warning: obs_radius %.3g covers the whole plate (radius %.3g)\n",
                 obs_radius, mat.plate_radius);
  if (rayleigh.alpha < 0 || rayleigh.beta < 0)
    throw ConfigError("rayleigh coefficients must be non-negative");

  SecondOrderModel model;
  model.grid = grid;
  model.layout = layout.node_index.size() == layout.positions.size() && !layout.positions.empty()
                     ? layout
                     : attach_layout(grid, layout);
  model.obs_radius = obs_radius;

  const int n = grid.size();
  const int m = model.layout.count();

  // distinct-node requirement
  std::vector<int> sorted = model.layout.node_index;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("duplicate actuator nodes: two actuators map to the same grid node");

  const Eigen::SparseMatrix<double> K = assemble_bending_stiffness(grid, mat);

  const double node_mass = mat.density * mat.thickness * grid.node_pitch * grid.node_pitch;
  std::vector<Eigen::Triplet<double>> m1, m2, m3, bt;
  m1.reserve(n);
  for (int k = 0; k < n; ++k) m1.emplace_back(k, k, node_mass);
  for (int a = 0; a < m; ++a) {
    const int node = model.layout.node_index[a];
    m1.emplace_back(node, node, act.mass);
    if (act.damping > 0) m2.emplace_back(node, node, act.damping);
    m3.emplace_back(node, node, act.stiffness);
    bt.emplace_back(node, a, 1.0);
  }

  model.M1.resize(n, n);
  model.M1.setFromTriplets(m1.begin(), m1.end());

  Eigen::SparseMatrix<double> damp(n, n);
  damp.setFromTriplets(m2.begin(), m2.end());
  model.M2 = damp;
  if (rayleigh.alpha > 0) model.M2 = model.M2 + rayleigh.alpha * model.M1;
  if (rayleigh.beta > 0) model.M2 = model.M2 + rayleigh.beta * K;

  Eigen::SparseMatrix<double> springs(n, n);
  springs.setFromTriplets(m3.begin(), m3.end());
  model.M3 = K + springs;

  model.B.resize(n, m);
  model.B.setFromTriplets(bt.begin(), bt.end());

  std::vector<Eigen::Triplet<double>> ct;
  for (int k = 0; k < n; ++k) {
    const auto& p = grid.nodes[k];
    if (p.x() * p.x() + p.y() * p.y() <= obs_radius * obs_radius * (1.0 + 1e-9)) {
      ct.emplace_back(static_cast<int>(model.obs_nodes.size()), k, 1.0);
      model.obs_nodes.push_back(k);
    }
  }
  model.C.resize(static_cast<int>(model.obs_nodes.size()), n);
  model.C.setFromTriplets(ct.begin(), ct.end());

  model.M1.makeCompressed();
  model.M2.makeCompressed();
  model.M3.makeCompressed();
  model.B.makeCompressed();
  model.C.makeCompressed();
  return model;
}

std::vector<Eigen::Vector2d> SecondOrderModel::obs_points() const {
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(obs_nodes.size());
  for (int node : obs_nodes) pts.push_back(grid.nodes[node]);
  return pts;
}

}  // namespace faceplate
