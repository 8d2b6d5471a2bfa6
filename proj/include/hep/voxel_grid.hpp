#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "hep/group.hpp"
#include "hep/types.hpp"

namespace hep {

using VoxelIndex = std::array<int, 3>;  // (x, y, z)

/// Axis-aligned voxel grid: origin is the min corner of voxel (0,0,0), dims
/// are (H, W, D) along (x, y, z).
struct VoxelGridSpec {
  Vec3 origin = Vec3::Zero();
  double resolution = 1.0;
  std::array<int, 3> dims = {1, 1, 1};
  int max_points_per_voxel = 6;

  /// Grid whose xy center sits on the world z axis.
  static VoxelGridSpec centered(double resolution, int nxy, int nz, double z_min,
                                int max_points = 6);
  /// Grid centered on the origin in all three axes.
  static VoxelGridSpec cube(double resolution, int n, int max_points = 6);

  /// Throws InvalidArgument on non-positive resolution/dims or H != W.
  void validate() const;

  std::size_t num_voxels() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  /// Linear index in (z, y, x) lexicographic order.
  std::size_t linear(const VoxelIndex& j) const {
    return (static_cast<std::size_t>(j[2]) * dims[1] + j[1]) * dims[0] + j[0];
  }
  VoxelIndex unravel(std::size_t lin) const;
  bool contains(const VoxelIndex& j) const;

  /// floor((p - origin) / resolution) if inside the grid, nullopt otherwise.
  /// Cells are half-open: [min, min + resolution).
  std::optional<VoxelIndex> world_to_index(const Vec3& p) const;
  Vec3 index_to_center(const VoxelIndex& j) const;
  Vec3 xy_center() const;

  bool operator==(const VoxelGridSpec&) const = default;
};

/// Dense c-channel voxel map; channels transform by `rep`. Data layout is
/// [channel][z][y][x].
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(VoxelGridSpec spec, RepSpec rep);

  const VoxelGridSpec& spec() const { return spec_; }
  const RepSpec& rep() const { return rep_; }
  int channels() const { return rep_.dim(); }

  double& at(int c, const VoxelIndex& j) { return data_[offset(c, j)]; }
  double at(int c, const VoxelIndex& j) const { return data_[offset(c, j)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::vector<double> features(const VoxelIndex& j) const;
  void set_features(const VoxelIndex& j, std::span<const double> f);

  bool operator==(const VoxelGrid&) const = default;

 private:
  std::size_t offset(int c, const VoxelIndex& j) const {
    return static_cast<std::size_t>(c) * spec_.num_voxels() + spec_.linear(j);
  }

  VoxelGridSpec spec_;
  RepSpec rep_;
  std::vector<double> data_;
};

}  // namespace hep
