#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace hep {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Positions produced by the environment and by the policy live on a dyadic
/// lattice of this pitch. Sums and differences of lattice values of moderate
/// magnitude are exact in binary64, which is what makes the translation laws
/// hold bit-for-bit.
inline constexpr double kPositionQuantum = 0x1.0p-20;

inline double snap_to_lattice(double v) {
  return std::round(v / kPositionQuantum) * kPositionQuantum;
}

inline Vec3 snap_to_lattice(const Vec3& p) {
  return {snap_to_lattice(p.x()), snap_to_lattice(p.y()), snap_to_lattice(p.z())};
}

/// Gripper pose and aperture: position (m), orientation as a rotation matrix,
/// aperture c in [0, 1] (1 = open).
struct GripperState {
  Vec3 position = Vec3::Zero();
  Mat3 q = Mat3::Identity();
  double c = 1.0;

  bool operator==(const GripperState&) const = default;
};

/// Throws InvalidArgument unless q is orthonormal with det +1 and c in [0,1].
void validate(const GripperState& s, double tol = 1e-9);

bool is_rotation(const Mat3& q, double tol = 1e-9);

/// Points with a fixed per-cloud feature width (3 for RGB).
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(int feature_width) : feature_width_(feature_width) {}

  int feature_width() const { return feature_width_; }
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }

  void reserve(std::size_t n) {
    positions_.reserve(n);
    features_.reserve(n * static_cast<std::size_t>(feature_width_));
  }

  void add(const Vec3& p, std::span<const double> f);

  const Vec3& position(std::size_t i) const { return positions_[i]; }
  Vec3& position(std::size_t i) { return positions_[i]; }

  std::span<const double> features(std::size_t i) const {
    return {features_.data() + i * static_cast<std::size_t>(feature_width_),
            static_cast<std::size_t>(feature_width_)};
  }

  const std::vector<Vec3>& positions() const { return positions_; }
  const std::vector<double>& feature_data() const { return features_; }

  bool operator==(const PointCloud&) const = default;

 private:
  int feature_width_ = 3;
  std::vector<Vec3> positions_;
  std::vector<double> features_;
};

/// m control steps of gripper states.
struct ActionChunk {
  std::vector<GripperState> steps;

  std::size_t size() const { return steps.size(); }
  bool operator==(const ActionChunk&) const = default;
};

/// Point cloud plus a short gripper history, both ordered oldest to newest.
struct Observation {
  PointCloud cloud;
  std::vector<GripperState> state_history;
  std::vector<GripperState> action_history;

  const GripperState& current_state() const { return state_history.back(); }
  bool operator==(const Observation&) const = default;
};

}  // namespace hep
