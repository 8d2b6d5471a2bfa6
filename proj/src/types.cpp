#include "hep/types.hpp"

#include <Eigen/LU>

#include <string>

#include "hep/error.hpp"

namespace hep {

bool is_rotation(const Mat3& q, double tol) {
  if (!q.allFinite()) return false;
  const Mat3 err = q.transpose() * q - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(q.determinant() - 1.0) <= tol;
}

void validate(const GripperState& s, double tol) {
  if (!s.position.allFinite()) throw InvalidArgument("gripper position is not finite");
  if (!is_rotation(s.q, tol)) throw InvalidArgument("gripper orientation is not a rotation");
  if (!(s.c >= 0.0 && s.c <= 1.0))
    throw InvalidArgument("gripper aperture " + std::to_string(s.c) + " outside [0,1]");
}

void PointCloud::add(const Vec3& p, std::span<const double> f) {
  if (static_cast<int>(f.size()) != feature_width_)
    throw InvalidArgument("point feature width " + std::to_string(f.size()) + " != cloud width " +
                          std::to_string(feature_width_));
  if (!p.allFinite()) throw InvalidArgument("point position is not finite");
  positions_.push_back(p);
  features_.insert(features_.end(), f.begin(), f.end());
}

}  // namespace hep
