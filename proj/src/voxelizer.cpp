#include "hep/voxelizer.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "hep/rng.hpp"

namespace hep {

std::size_t PointPartition::retained() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.size();
  return n;
}

namespace {

struct Candidate {
  std::size_t point = 0;
  double score = 0.0;
  double rel_z = 0.0;
  double r2 = 0.0;
  double rel_x = 0.0;
  double rel_y = 0.0;
};

}  // namespace

PointPartition partition(const PointCloud& cloud, const VoxelGridSpec& spec, std::uint64_t seed) {
  spec.validate();
  PointPartition part;
  part.spec = spec;
  part.feature_width = cloud.feature_width();
  const int fw = cloud.feature_width();

  Rng rng(mix_seed(seed, 0x7061727469ULL));
  const double w_z = rng.uniform(-1.0, 1.0);
  const double w_r = rng.uniform(-1.0, 1.0);
  std::vector<double> w_f(static_cast<std::size_t>(fw));
  for (auto& w : w_f) w = rng.uniform(-1.0, 1.0);

  std::map<std::size_t, std::vector<Candidate>> buckets;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto j = spec.world_to_index(cloud.position(i));
    if (!j) {
      ++part.out_of_bounds;
      continue;
    }
    const Vec3 rel = cloud.position(i) - spec.index_to_center(*j);
    Candidate c;
    c.point = i;
    c.rel_x = rel.x();
    c.rel_y = rel.y();
    c.rel_z = rel.z();
    c.r2 = rel.x() * rel.x() + rel.y() * rel.y();
    const auto f = cloud.features(i);
    c.score = w_z * (rel.z() / spec.resolution) +
              w_r * (c.r2 / (spec.resolution * spec.resolution));
    for (int k = 0; k < fw; ++k) c.score += w_f[static_cast<std::size_t>(k)] * f[k];
    buckets[spec.linear(*j)].push_back(c);
  }

  const auto invariant_less = [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.rel_z != b.rel_z) return a.rel_z < b.rel_z;
    if (a.r2 != b.r2) return a.r2 < b.r2;
    const auto fa = cloud.features(a.point), fb = cloud.features(b.point);
    for (int k = 0; k < fw; ++k)
      if (fa[k] != fb[k]) return fa[k] < fb[k];
    return false;
  };
  const auto less = [&](const Candidate& a, const Candidate& b) {
    if (invariant_less(a, b) || invariant_less(b, a)) return invariant_less(a, b);
    // Only reached for points that agree in every invariant quantity.
    if (a.rel_x != b.rel_x) return a.rel_x < b.rel_x;
    return a.rel_y < b.rel_y;
  };

  const auto cap = static_cast<std::size_t>(spec.max_points_per_voxel);
  part.cells.reserve(buckets.size());
  for (auto& [lin, cands] : buckets) {
    std::stable_sort(cands.begin(), cands.end(), less);
    if (cands.size() > cap) {
      // A cut through points that agree in every invariant quantity would be
      // decided by raw coordinates; drop the whole tied group instead.
      std::size_t keep = cap;
      while (keep > 0 && !invariant_less(cands[keep - 1], cands[cap])) --keep;
      part.truncated += cands.size() - keep;
      cands.resize(keep);
    }
    VoxelCell cell;
    cell.index = spec.unravel(lin);
    cell.positions.reserve(cands.size());
    cell.features.reserve(cands.size() * static_cast<std::size_t>(fw));
    for (const auto& c : cands) {
      cell.positions.push_back(cloud.position(c.point));
      const auto f = cloud.features(c.point);
      cell.features.insert(cell.features.end(), f.begin(), f.end());
    }
    part.cells.push_back(std::move(cell));
  }
  return part;
}

VoxelGrid rasterize(const PointCloud& cloud, const VoxelGridSpec& spec, RasterMode mode, int u) {
  const PointPartition part = partition(cloud, spec);
  const int fw = cloud.feature_width();
  int channels = 1;
  if (mode == RasterMode::MeanFeature) channels = fw;
  if (mode == RasterMode::OccupancyAndMean) channels = fw + 1;
  VoxelGrid grid(spec, RepSpec::trivial(channels, u));

  std::vector<double> f(static_cast<std::size_t>(channels));
  for (const VoxelCell& cell : part.cells) {
    std::fill(f.begin(), f.end(), 0.0);
    int c0 = 0;
    if (mode != RasterMode::MeanFeature) {
      f[0] = 1.0;
      c0 = 1;
    }
    if (mode != RasterMode::Occupancy) {
      // Running mean, so a voxel of identical features reproduces them exactly.
      for (std::size_t p = 0; p < cell.size(); ++p)
        for (int k = 0; k < fw; ++k) {
          double& mu = f[static_cast<std::size_t>(c0 + k)];
          mu += (cell.features[p * fw + k] - mu) / static_cast<double>(p + 1);
        }
    }
    grid.set_features(cell.index, f);
  }
  return grid;
}

}  // namespace hep
