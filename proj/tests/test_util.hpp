#pragma once

#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "hep/group.hpp"
#include "hep/rng.hpp"
#include "hep/types.hpp"

namespace hep::testing {

inline Vec3 random_vec(Rng& rng, double lo = -1.0, double hi = 1.0) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

/// Uniformly random rotation from a normalized Gaussian quaternion.
inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline GripperState random_gripper(Rng& rng) {
  GripperState s;
  s.position = random_vec(rng);
  s.q = random_rotation(rng);
  s.c = rng.uniform();
  return s;
}

inline PointCloud random_cloud(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0,
                               int kf = 3) {
  PointCloud c(kf);
  std::vector<double> f(static_cast<std::size_t>(kf));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : f) v = rng.uniform();
    c.add(random_vec(rng, lo, hi), f);
  }
  return c;
}

/// Random element of T(3) x C_u with translation components in [-1, 1].
inline GroupElement random_element(Rng& rng, int u = 4) {
  return {random_vec(rng), rng.uniform_int(0, u - 1), u};
}

inline double max_abs_diff(const GripperState& a, const GripperState& b) {
  double d = (a.position - b.position).cwiseAbs().maxCoeff();
  d = std::max(d, (a.q - b.q).cwiseAbs().maxCoeff());
  return std::max(d, std::abs(a.c - b.c));
}

}  // namespace hep::testing
