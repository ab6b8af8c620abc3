#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace faceplate {

/// Zernike mode identity: radial degree n, signed azimuthal frequency m
/// (m > 0 cosine, m < 0 sine), and the Noll single index j. Piston (j = 1)
/// is excluded everywhere.
struct ModeIndex {
  int n = 0;
  int m = 0;
  int noll_j = 0;
};

/// Noll index for (n, m); throws on invalid (n, m).
int noll_index(int n, int m);
ModeIndex mode_from_noll(int j);

/// First l Noll-ordered modes starting at j = 2 (tip).
std::vector<ModeIndex> noll_modes(int l);

/// "Z2^0" <-> ModeIndex{2, 0, 4}; m is signed ("Z3^-3").
ModeIndex parse_mode_name(const std::string& name);
std::string mode_name(const ModeIndex& mode);

/// Mode value at unit-disk coordinates, Noll normalization (RMS 1 over the disk).
double zernike_eval(const ModeIndex& mode, double x, double y);

/// Sampled basis: Z(i, k) = mode_k at point_i with radii normalized by
/// norm_radius. Points outside norm_radius are an error.
Eigen::MatrixXd eval_basis(const std::vector<Eigen::Vector2d>& points,
                           const std::vector<ModeIndex>& modes, double norm_radius);

/// Least-squares projector: C1 y minimizes ||Z q - y||_2. Requires Z of full
/// column rank; computed via a rank-revealing orthogonal factorization.
Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& Z);

/// Sampled basis plus projector mapping observed displacements to mode
/// coefficients, q = C1 y.
struct ZernikeMap {
  std::vector<ModeIndex> modes;
  Eigen::MatrixXd Z;   // r x l
  Eigen::MatrixXd C1;  // l x r
  double norm_radius = 0.0;
};

ZernikeMap make_zernike_map(const std::vector<Eigen::Vector2d>& points, int l,
                            double norm_radius);

/// y_d[i] = amplitude * Z_mode(point_i).
Eigen::VectorXd synthesize_target(const ModeIndex& mode, double amplitude,
                                  const std::vector<Eigen::Vector2d>& points,
                                  double norm_radius);

}  // namespace faceplate
