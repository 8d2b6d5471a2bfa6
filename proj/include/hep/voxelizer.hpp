#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hep/error.hpp"
#include "hep/voxel_grid.hpp"

namespace hep {

/// Points that fell inside one voxel, in truncation order.
struct VoxelCell {
  VoxelIndex index{};
  std::vector<Vec3> positions;
  std::vector<double> features;  // row-major, feature_width per point

  std::size_t size() const { return positions.size(); }
};

struct PointPartition {
  VoxelGridSpec spec;
  int feature_width = 3;
  std::vector<VoxelCell> cells;  // non-empty cells, ascending linear index
  std::size_t truncated = 0;      // in-bounds points dropped by the per-voxel cap
  std::size_t out_of_bounds = 0;

  std::size_t retained() const;
};

inline constexpr std::uint64_t kDefaultPartitionSeed = 0x5eedULL;

/// Assigns every in-bounds point to its voxel and keeps at most
/// max_points_per_voxel per voxel. The kept points are the first ones under a
/// seeded ordering built only from quantities that are unchanged by the group
/// action (height above the voxel center, squared planar distance from it,
/// features), so neither the input order nor a grid-compatible transform of
/// the cloud changes which points survive. Points tied in all of these at the
/// cap are dropped together, so a voxel may keep fewer than the cap.
PointPartition partition(const PointCloud& cloud, const VoxelGridSpec& spec,
                         std::uint64_t seed = kDefaultPartitionSeed);

enum class RasterMode { Occupancy, MeanFeature, OccupancyAndMean };

/// Plain voxelization. Output channels are all trivial.
VoxelGrid rasterize(const PointCloud& cloud, const VoxelGridSpec& spec, RasterMode mode,
                    int u = 4);

/// A per-voxel point-set encoder: declares the representation of its output
/// and maps (voxel center, points in the voxel) to a feature vector.
template <typename E>
concept PointSetEncoder = requires(const E& e, const Vec3& c, const VoxelCell& cell) {
  { e.output_rep() } -> std::convertible_to<RepSpec>;
  { e(c, cell) } -> std::convertible_to<std::vector<double>>;
};

/// Stacked-voxel representation: voxel j holds encoder(center_j, P_j); empty
/// voxels hold zeros.
template <PointSetEncoder E>
VoxelGrid encode_stacked(const PointPartition& part, const E& encoder,
                         const RepSpec& declared_rep) {
  if (!(encoder.output_rep() == declared_rep))
    throw InvalidArgument("encode_stacked: encoder output rep does not match the grid rep");
  VoxelGrid grid(part.spec, declared_rep);
  for (const VoxelCell& cell : part.cells) {
    const std::vector<double> f = encoder(part.spec.index_to_center(cell.index), cell);
    if (static_cast<int>(f.size()) != declared_rep.dim())
      throw InvalidArgument("encode_stacked: encoder returned " + std::to_string(f.size()) +
                            " features, expected " + std::to_string(declared_rep.dim()));
    grid.set_features(cell.index, f);
  }
  return grid;
}

}  // namespace hep
