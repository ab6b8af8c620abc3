#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace faceplate {

struct MaterialSpec {
  double youngs_modulus = 9.03e10;  // Pa
  double density = 2530.0;          // kg/m^3
  double poisson_ratio = 0.24;
  double thickness = 0.003;  // m
  double plate_radius = 1.0;  // m

  /// D = E t^3 / (12 (1 - nu^2))
  double flexural_rigidity() const;
  void validate() const;
};

struct ActuatorSpec {
  double stiffness = 1.0e4;  // N/m
  double damping = 500.0;    // N s/m
  double mass = 0.3;         // kg
  double pitch = 0.2;        // m, actuator lattice spacing
  double inclusion_radius = 0.9;  // m, actuators placed where |pos| <= this

  void validate() const;
};

/// Proportional (Rayleigh) plate damping alpha*M1 + beta*K, off by default;
/// actuator dashpots are the only dissipation otherwise.
struct RayleighDamping {
  double alpha = 0.0;
  double beta = 0.0;
};

enum class BoundaryMode { free_edge, clamped };

BoundaryMode boundary_mode_from_string(const std::string& s);
std::string to_string(BoundaryMode mode);

/// Uniform square lattice of pitch node_pitch masked to the plate disk.
/// Node k lives at lattice coordinates lattice[k] = (i, j), position
/// (i*node_pitch, j*node_pitch); indices are contiguous 0..n-1.
struct PlateGrid {
  double node_pitch = 0.0;
  double plate_radius = 0.0;
  BoundaryMode boundary = BoundaryMode::free_edge;
  std::vector<Eigen::Vector2d> nodes;
  std::vector<std::pair<int, int>> lattice;
  std::unordered_map<std::int64_t, int> index;

  int size() const { return static_cast<int>(nodes.size()); }
  /// Row of lattice point (i, j), or -1 when outside the mask.
  int node_at(int i, int j) const;
  static std::int64_t pack(int i, int j);
};

struct ActuatorLayout {
  std::vector<Eigen::Vector2d> positions;
  /// Nearest grid node per actuator; filled by attach_layout / assemble_model.
  std::vector<int> node_index;

  int count() const { return static_cast<int>(positions.size()); }
};

/// Discrete second-order model M1 zdd + M2 zd + M3 z = B u, y = C z.
struct SecondOrderModel {
  Eigen::SparseMatrix<double> M1;  // n x n mass
  Eigen::SparseMatrix<double> M2;  // n x n damping
  Eigen::SparseMatrix<double> M3;  // n x n stiffness
  Eigen::SparseMatrix<double> B;   // n x m force placement
  Eigen::SparseMatrix<double> C;   // r x n out-of-plane observation selector
  PlateGrid grid;
  ActuatorLayout layout;
  double obs_radius = 0.0;
  std::vector<int> obs_nodes;  // C row -> node index

  int n() const { return static_cast<int>(M1.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int r() const { return static_cast<int>(C.rows()); }
  std::vector<Eigen::Vector2d> obs_points() const;
};

/// All lattice points (i*pitch, j*pitch) with Euclidean norm <= inclusion_radius.
/// Throws when no lattice point qualifies.
ActuatorLayout build_layout(const ActuatorSpec& act);

/// Square lattice masked to the disk of plate_radius. node_pitch must be
/// positive and no coarser than plate_radius/2 (the coarsest mask that still
/// resolves the disk).
PlateGrid build_grid(const MaterialSpec& mat, double node_pitch, BoundaryMode boundary);

/// Bending stiffness as the exact Hessian of the discrete Kirchhoff energy
///   U = (D/2) sum [ w_xx^2 + w_yy^2 + 2 nu w_xx w_yy + 2(1-nu) w_xy^2 ] d^2
/// with second differences per node (w_xx, w_yy) and per cell (w_xy).
/// Free edges arise from truncating the energy at the mask; clamped mode
/// extends the energy with zero-valued ghost points beyond the disk and pins
/// the boundary-layer nodes, fixing displacement and slope at the rim.
Eigen::SparseMatrix<double> assemble_bending_stiffness(const PlateGrid& grid,
                                                       const MaterialSpec& mat);

/// Nodes pinned in clamped mode (within half a pitch of the rim); all false
/// for free-edge grids. Pinned rows carry only a diagonal entry in K, so
/// clamped-plate loads should be placed on the complement.
std::vector<bool> clamped_pinned_nodes(const PlateGrid& grid);

/// Maps each actuator to its nearest grid node (deterministic tie-break on
/// the lower node index). Returns a copy of `layout` with node_index filled.
ActuatorLayout attach_layout(const PlateGrid& grid, const ActuatorLayout& layout);

SecondOrderModel assemble_model(const PlateGrid& grid, const MaterialSpec& mat,
                                const ActuatorSpec& act, const ActuatorLayout& layout,
                                double obs_radius,
                                const RayleighDamping& rayleigh = {});

}  // namespace faceplate
