#include "hep/voxel_grid.hpp"

#include <cmath>
#include <string>

#include "hep/error.hpp"

namespace hep {

VoxelGridSpec VoxelGridSpec::centered(double resolution, int nxy, int nz, double z_min,
                                      int max_points) {
  VoxelGridSpec s;
  s.resolution = resolution;
  s.dims = {nxy, nxy, nz};
  s.origin = Vec3(-0.5 * nxy * resolution, -0.5 * nxy * resolution, z_min);
  s.max_points_per_voxel = max_points;
  s.validate();
  return s;
}

VoxelGridSpec VoxelGridSpec::cube(double resolution, int n, int max_points) {
  return centered(resolution, n, n, -0.5 * n * resolution, max_points);
}

void VoxelGridSpec::validate() const {
  if (!(resolution > 0.0)) throw InvalidArgument("voxel resolution must be positive");
  for (int d : dims)
    if (d < 1) throw InvalidArgument("voxel grid dims must be >= 1");
  if (dims[0] != dims[1]) throw InvalidArgument("voxel grid must be square in x,y (H == W)");
  if (max_points_per_voxel < 1) throw InvalidArgument("max_points_per_voxel must be >= 1");
  if (!origin.allFinite()) throw InvalidArgument("voxel grid origin is not finite");
}

VoxelIndex VoxelGridSpec::unravel(std::size_t lin) const {
  const auto nx = static_cast<std::size_t>(dims[0]), ny = static_cast<std::size_t>(dims[1]);
  return {static_cast<int>(lin % nx), static_cast<int>((lin / nx) % ny),
          static_cast<int>(lin / (nx * ny))};
}

bool VoxelGridSpec::contains(const VoxelIndex& j) const {
  for (int a = 0; a < 3; ++a)
    if (j[a] < 0 || j[a] >= dims[a]) return false;
  return true;
}

std::optional<VoxelIndex> VoxelGridSpec::world_to_index(const Vec3& p) const {
  VoxelIndex j;
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - origin[a]) / resolution);
    if (!(f >= 0.0 && f < dims[a])) return std::nullopt;
    j[a] = static_cast<int>(f);
  }
  return j;
}

Vec3 VoxelGridSpec::index_to_center(const VoxelIndex& j) const {
  return {origin.x() + (j[0] + 0.5) * resolution, origin.y() + (j[1] + 0.5) * resolution,
          origin.z() + (j[2] + 0.5) * resolution};
}

Vec3 VoxelGridSpec::xy_center() const {
  return {origin.x() + 0.5 * dims[0] * resolution, origin.y() + 0.5 * dims[1] * resolution,
          origin.z()};
}

VoxelGrid::VoxelGrid(VoxelGridSpec spec, RepSpec rep)
    : spec_(std::move(spec)), rep_(rep),
      data_(static_cast<std::size_t>(rep.dim()) * spec_.num_voxels(), 0.0) {
  spec_.validate();
  if (rep.dim() < 1) throw InvalidArgument("voxel grid needs at least one channel");
}

std::vector<double> VoxelGrid::features(const VoxelIndex& j) const {
  std::vector<double> f(static_cast<std::size_t>(channels()));
  for (int c = 0; c < channels(); ++c) f[static_cast<std::size_t>(c)] = at(c, j);
  return f;
}

void VoxelGrid::set_features(const VoxelIndex& j, std::span<const double> f) {
  if (static_cast<int>(f.size()) != channels())
    throw InvalidArgument("feature vector size " + std::to_string(f.size()) +
                          " != grid channels " + std::to_string(channels()));
  for (int c = 0; c < channels(); ++c) at(c, j) = f[static_cast<std::size_t>(c)];
}

}  // namespace hep
