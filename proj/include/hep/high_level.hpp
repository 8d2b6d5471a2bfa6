#pragma once

#include <cstddef>

#include "hep/nn/graph.hpp"
#include "hep/nn/layers.hpp"
#include "hep/nn/param.hpp"
#include "hep/voxel_grid.hpp"

namespace hep {

struct HighLevelConfig {
  /// Ego-world-fixed observation grid; its xy center is on the world z axis.
  VoxelGridSpec grid = VoxelGridSpec::centered(0x1.0p-5, 16, 16, 0.0, 6);
  int kf = 3;
  int u = 4;
  std::vector<int> encoder_hidden = {4, 4};  // regular multiplicities of the per-point layers
  RepSpec encoder_out = {4, 0, 0, 2};
  std::vector<int> unet_widths = {1, 2, 4};
  int kernel = 3;
  nn::Padding padding = nn::Padding::Circular;
  bool stacked = true;  // false: plain occupancy + mean-feature rasterization
  bool tied = true;

  /// Channel rep fed to the UNet.
  RepSpec input_rep() const;
  /// Throws InvalidArgument when the grid and the UNet depth do not fit.
  void validate() const;
};

/// pi_high: observation cloud -> stacked voxels (or raster) -> UNet -> logits.
class HighLevelNet {
 public:
  HighLevelNet(nn::ParamStore& store, const HighLevelConfig& cfg, Rng& rng);

  /// Logits [1, Z, Y, X]. Throws InvalidArgument on an empty cloud.
  template <typename T>
  nn::Var forward(nn::Graph<T>& g, const PointCloud& cloud) const;

  const HighLevelConfig& config() const { return cfg_; }
  void set_padding(nn::Padding p);
  /// The per-voxel encoder; unset (default-constructed) without stacked voxels.
  const nn::EqPointNet& encoder() const { return encoder_; }
  const nn::EqUNet& unet() const { return unet_; }

 private:
  HighLevelConfig cfg_;
  nn::EqPointNet encoder_;
  nn::EqUNet unet_;
};

/// Heatmap: VoxelGrid over the observation grid with one trivial logit channel.
VoxelGrid high_forward(const HighLevelNet& net, const Observation& obs);

/// Linear index of the maximum logit; ties go to the lowest linear index.
std::size_t argmax_voxel(const VoxelGrid& heatmap);
/// Best logit minus the runner-up (infinity for a single voxel).
double argmax_margin(const VoxelGrid& heatmap);
/// Center of the argmax voxel.
Vec3 select_keypose(const VoxelGrid& heatmap);

/// One-hot target index of t_star. Throws InvalidArgument naming the
/// coordinate when t_star is outside the grid.
std::size_t make_target(const VoxelGridSpec& spec, const Vec3& t_star);

/// -log softmax(logits)[target] over all voxels.
template <typename T>
nn::Var loss_high(nn::Graph<T>& g, nn::Var logits, std::size_t target) {
  return g.cross_entropy(logits, target);
}
double loss_high(const VoxelGrid& heatmap, std::size_t target);

/// Softmax probabilities of a heatmap.
std::vector<double> heatmap_probabilities(const VoxelGrid& heatmap);

}  // namespace hep
