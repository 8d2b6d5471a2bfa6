#pragma once

#include <Eigen/Core>
#include <span>
#include <utility>
#include <vector>

#include "hep/types.hpp"

namespace hep {

/// Element g = (t, theta) of T(3) x C_u, theta = 2*pi*m/u about the world z axis.
///
/// Acts on positions by translating first and then rotating the xy part:
///   g.p = (R_theta (x + t_x, y + t_y), z + t_z).
struct GroupElement {
  Vec3 t = Vec3::Zero();
  int m = 0;
  int u = 4;

  static GroupElement identity(int u = 4) { return {Vec3::Zero(), 0, u}; }
  static GroupElement rotation(int m, int u = 4);
  static GroupElement translation(const Vec3& t, int u = 4) { return {t, 0, u}; }

  /// True when theta is a multiple of a quarter turn, so cos/sin are in {0, +-1}.
  bool is_quarter_turn() const { return (4 * m) % u == 0; }

  bool operator==(const GroupElement&) const = default;
};

/// cos and sin of 2*pi*m/u; exact for quarter turns.
std::pair<double, double> cos_sin(int m, int u);

/// R_theta as a 2x2 matrix.
Eigen::Matrix2d rotation2(const GroupElement& g);
/// The 3x3 block extension diag(R_theta, 1).
Mat3 rotation3(const GroupElement& g);

/// Group law, chosen so that act(compose(g2, g1), x) == act(g2, act(g1, x)).
GroupElement compose(const GroupElement& g2, const GroupElement& g1);
GroupElement inverse(const GroupElement& g);

/// Multiplicities of trivial (dim 1), standard (dim 2) and regular (dim u)
/// blocks. Coordinates are laid out as all rho0 blocks, then rho1 pairs, then
/// rho_reg blocks.
struct RepSpec {
  int u = 4;
  int n0 = 0;
  int n1 = 0;
  int nreg = 0;

  int dim() const { return n0 + 2 * n1 + u * nreg; }
  int rho1_offset() const { return n0; }
  int reg_offset() const { return n0 + 2 * n1; }
  bool has_standard() const { return n1 > 0; }

  static RepSpec trivial(int n, int u = 4) { return {u, n, 0, 0}; }
  static RepSpec regular(int n, int u = 4) { return {u, 0, 0, n}; }

  bool operator==(const RepSpec&) const = default;
};

RepSpec direct_sum(const RepSpec& a, const RepSpec& b);

/// Dense block-diagonal rho(g) for the rotation part of g.
Eigen::MatrixXd rep_matrix(const RepSpec& rep, const GroupElement& g);

/// x <- rho(r^m) x without forming the matrix. Rotation index m may be any
/// integer; it is reduced modulo u.
template <typename T>
void apply_rep(const RepSpec& rep, int m, std::span<T> x);

/// y <- rho(r^m) x for x laid out with `stride` between consecutive
/// coordinates (used for channel-major grids).
template <typename T>
void apply_rep_strided(const RepSpec& rep, int m, const T* x, T* y, std::size_t stride);

struct FeaturePoint {
  Vec3 position = Vec3::Zero();
  std::vector<double> features;

  bool operator==(const FeaturePoint&) const = default;
};

Vec3 act_point(const GroupElement& g, const Vec3& p);
FeaturePoint act_point(const GroupElement& g, const FeaturePoint& p);
/// Rotation part only; for directions and offsets.
Vec3 rotate_vector(const GroupElement& g, const Vec3& v);

/// Throws InvalidArgument if s.q is not a rotation.
GripperState act_gripper(const GroupElement& g, const GripperState& s);
ActionChunk act_chunk(const GroupElement& g, const ActionChunk& a);
PointCloud act_cloud(const GroupElement& g, const PointCloud& cloud);
Observation act_observation(const GroupElement& g, const Observation& o);

class VoxelGrid;

/// (g V)(x) = rho(theta) V(g^{-1} x), with rotations about the grid's xy
/// center. Cells mapped out of bounds are dropped and vacated cells are zero.
/// Throws InexactTransform unless the rotation is a quarter turn on a square
/// xy grid and the translation is a whole number of voxels per axis.
VoxelGrid act_voxelmap(const GroupElement& g, const VoxelGrid& grid);

}  // namespace hep
