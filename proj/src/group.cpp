#include "hep/group.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hep/error.hpp"
#include "hep/voxel_grid.hpp"

namespace hep {

namespace {

int wrap(int m, int u) {
  const int r = m % u;
  return r < 0 ? r + u : r;
}

void check_same_order(const GroupElement& a, const GroupElement& b) {
  if (a.u != b.u)
    throw InvalidArgument("group order mismatch: " + std::to_string(a.u) + " vs " +
                          std::to_string(b.u));
}

}  // namespace

GroupElement GroupElement::rotation(int m, int u) {
  if (u < 1) throw InvalidArgument("group order must be >= 1");
  return {Vec3::Zero(), wrap(m, u), u};
}

std::pair<double, double> cos_sin(int m, int u) {
  m = wrap(m, u);
  if ((4 * m) % u == 0) {
    switch ((4 * m) / u) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  const double a = 2.0 * std::numbers::pi * m / u;
  return {std::cos(a), std::sin(a)};
}

Eigen::Matrix2d rotation2(const GroupElement& g) {
  const auto [c, s] = cos_sin(g.m, g.u);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Mat3 rotation3(const GroupElement& g) {
  const auto [c, s] = cos_sin(g.m, g.u);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

// act(g2, act(g1, p)) = R2 (R1 (p + t1) + t2) = R2 R1 (p + t1 + R1^{-1} t2)
GroupElement compose(const GroupElement& g2, const GroupElement& g1) {
  check_same_order(g2, g1);
  const Vec3 back = rotate_vector(GroupElement::rotation(-g1.m, g1.u), g2.t);
  return {g1.t + back, wrap(g1.m + g2.m, g1.u), g1.u};
}

// R (p + t) = q  =>  p = R^{-1} (q - R t)
GroupElement inverse(const GroupElement& g) {
  return {-rotate_vector(GroupElement::rotation(g.m, g.u), g.t), wrap(-g.m, g.u), g.u};
}

RepSpec direct_sum(const RepSpec& a, const RepSpec& b) {
  if (a.u != b.u) throw InvalidArgument("direct sum of reps with different group orders");
  return {a.u, a.n0 + b.n0, a.n1 + b.n1, a.nreg + b.nreg};
}

template <typename T>
void apply_rep_strided(const RepSpec& rep, int m, const T* x, T* y, std::size_t stride) {
  m = wrap(m, rep.u);
  for (int i = 0; i < rep.n0; ++i) y[i * stride] = x[i * stride];
  const auto [cd, sd] = cos_sin(m, rep.u);
  const T c = static_cast<T>(cd), s = static_cast<T>(sd);
  for (int k = 0; k < rep.n1; ++k) {
    const std::size_t i0 = static_cast<std::size_t>(rep.rho1_offset() + 2 * k) * stride;
    const std::size_t i1 = i0 + stride;
    const T a = x[i0], b = x[i1];
    y[i0] = c * a - s * b;
    y[i1] = s * a + c * b;
  }
  const int u = rep.u;
  for (int k = 0; k < rep.nreg; ++k) {
    const int base = rep.reg_offset() + u * k;
    for (int i = 0; i < u; ++i)
      y[static_cast<std::size_t>(base + i) * stride] =
          x[static_cast<std::size_t>(base + wrap(i - m, u)) * stride];
  }
}

template <typename T>
void apply_rep(const RepSpec& rep, int m, std::span<T> x) {
  if (static_cast<int>(x.size()) != rep.dim())
    throw InvalidArgument("apply_rep: vector size " + std::to_string(x.size()) +
                          " != rep dim " + std::to_string(rep.dim()));
  std::vector<T> tmp(x.begin(), x.end());
  apply_rep_strided<T>(rep, m, tmp.data(), x.data(), 1);
}

template void apply_rep<double>(const RepSpec&, int, std::span<double>);
template void apply_rep<float>(const RepSpec&, int, std::span<float>);
template void apply_rep_strided<double>(const RepSpec&, int, const double*, double*, std::size_t);
template void apply_rep_strided<float>(const RepSpec&, int, const float*, float*, std::size_t);

Eigen::MatrixXd rep_matrix(const RepSpec& rep, const GroupElement& g) {
  if (rep.u != g.u) throw InvalidArgument("rep_matrix: group order mismatch");
  const int d = rep.dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> e(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[static_cast<std::size_t>(j)] = 1.0;
    apply_rep<double>(rep, g.m, e);
    for (int i = 0; i < d; ++i) out(i, j) = e[static_cast<std::size_t>(i)];
  }
  return out;
}

Vec3 rotate_vector(const GroupElement& g, const Vec3& v) {
  const auto [c, s] = cos_sin(g.m, g.u);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

Vec3 act_point(const GroupElement& g, const Vec3& p) {
  return rotate_vector(g, p + g.t);
}

FeaturePoint act_point(const GroupElement& g, const FeaturePoint& p) {
  return {act_point(g, p.position), p.features};
}

GripperState act_gripper(const GroupElement& g, const GripperState& s) {
  if (!is_rotation(s.q)) throw InvalidArgument("act_gripper: orientation is not a rotation");
  GripperState out = s;
  out.position = act_point(g, s.position);
  if (g.m != 0) {
    const auto [c, sn] = cos_sin(g.m, g.u);
    for (int col = 0; col < 3; ++col) {
      const double a = s.q(0, col), b = s.q(1, col);
      out.q(0, col) = c * a - sn * b;
      out.q(1, col) = sn * a + c * b;
    }
  }
  return out;
}

ActionChunk act_chunk(const GroupElement& g, const ActionChunk& a) {
  ActionChunk out;
  out.steps.reserve(a.steps.size());
  for (const auto& s : a.steps) out.steps.push_back(act_gripper(g, s));
  return out;
}

PointCloud act_cloud(const GroupElement& g, const PointCloud& cloud) {
  PointCloud out(cloud.feature_width());
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    out.add(act_point(g, cloud.position(i)), cloud.features(i));
  return out;
}

Observation act_observation(const GroupElement& g, const Observation& o) {
  Observation out;
  out.cloud = act_cloud(g, o.cloud);
  for (const auto& s : o.state_history) out.state_history.push_back(act_gripper(g, s));
  for (const auto& s : o.action_history) out.action_history.push_back(act_gripper(g, s));
  return out;
}

namespace {

int whole_voxels(double t, double res, const char* axis) {
  const double v = t / res;
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-9)
    throw InexactTransform(std::string("translation along ") + axis +
                           " is not a whole number of voxels");
  return static_cast<int>(r);
}

}  // namespace

VoxelGrid act_voxelmap(const GroupElement& g, const VoxelGrid& grid) {
  const VoxelGridSpec& spec = grid.spec();
  if (grid.rep().u != g.u) throw InvalidArgument("act_voxelmap: group order mismatch");
  if (!g.is_quarter_turn())
    throw InexactTransform("rotation is not a multiple of a quarter turn");
  const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];
  if (g.m != 0 && nx != ny) throw InexactTransform("rotation requires a square xy grid");
  const int tx = whole_voxels(g.t.x(), spec.resolution, "x");
  const int ty = whole_voxels(g.t.y(), spec.resolution, "y");
  const int tz = whole_voxels(g.t.z(), spec.resolution, "z");

  // g^{-1} x = R^{-1} x - t. Work in doubled coordinates centered on the grid
  // (u = 2i + 1 - n) so the quarter-turn rotation stays in integers.
  const auto [cd, sd] = cos_sin(-g.m, g.u);
  const int c = static_cast<int>(cd), s = static_cast<int>(sd);

  VoxelGrid out(spec, grid.rep());
  const std::size_t nvox = spec.num_voxels();
  for (int z = 0; z < nz; ++z) {
    const int sz = z - tz;
    if (sz < 0 || sz >= nz) continue;
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const int ux = 2 * x + 1 - nx, uy = 2 * y + 1 - ny;
        const int rx = c * ux - s * uy, ry = s * ux + c * uy;
        const int sx = (rx + nx - 1) / 2 - tx, sy = (ry + ny - 1) / 2 - ty;
        if (sx < 0 || sx >= nx || sy < 0 || sy >= ny) continue;
        const std::size_t src = spec.linear({sx, sy, sz});
        const std::size_t dst = spec.linear({x, y, z});
        apply_rep_strided<double>(grid.rep(), g.m, grid.data().data() + src,
                                  out.data().data() + dst, nvox);
      }
    }
  }
  return out;
}

}  // namespace hep
