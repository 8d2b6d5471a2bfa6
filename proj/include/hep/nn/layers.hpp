#pragma once

#include <span>
#include <string>
#include <vector>

#include "hep/group.hpp"
#include "hep/nn/graph.hpp"
#include "hep/nn/param.hpp"
#include "hep/voxelizer.hpp"

namespace hep::nn {

/// Pointwise nonlinearities commute with rho0 and rho_reg (identity and
/// permutations) but not with rho1; throws InvalidArgument on rho1 blocks.
void require_pointwise(const RepSpec& rep, const std::string& where);

template <typename T>
Var typed_silu(Graph<T>& g, Var x, const RepSpec& rep);

/// Dense layer whose effective weight commutes with the group action when
/// `tied`; untied layers are plain linear maps (the No-Equi ablation).
class EqLinear {
 public:
  EqLinear() = default;
  EqLinear(ParamStore& store, const std::string& name, RepSpec in, RepSpec out, bool tied,
           Rng& rng, bool bias = true);

  /// x [N, in.dim()] -> [N, out.dim()].
  template <typename T>
  Var forward(Graph<T>& g, Var x) const;

  const RepSpec& in() const { return in_; }
  const RepSpec& out() const { return out_; }
  Parameter* weight() const { return w_; }
  Parameter* bias() const { return b_; }

 private:
  RepSpec in_, out_;
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

/// 3D convolution with kernels tied under xy tap rotation plus channel
/// transforms. Rotations are exact only for quarter turns, so u must divide 4.
class EqConv3d {
 public:
  EqConv3d() = default;
  EqConv3d(ParamStore& store, const std::string& name, RepSpec in, RepSpec out, int kernel,
           Padding pad, bool tied, Rng& rng);

  /// x [in.dim(), Z, Y, X] -> [out.dim(), Z, Y, X].
  template <typename T>
  Var forward(Graph<T>& g, Var x) const;

  const RepSpec& in() const { return in_; }
  const RepSpec& out() const { return out_; }
  Parameter* weight() const { return w_; }
  Padding padding() const { return pad_; }
  void set_padding(Padding p) { pad_ = p; }

 private:
  RepSpec in_, out_;
  Padding pad_ = Padding::Zero;
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

/// Linear layers with SiLU between them (and after the last one when
/// activate_last). Hidden reps must be pointwise-compatible.
class EqMLP {
 public:
  EqMLP() = default;
  EqMLP(ParamStore& store, const std::string& name, const std::vector<RepSpec>& reps, bool tied,
        Rng& rng, bool activate_last = false);

  template <typename T>
  Var forward(Graph<T>& g, Var x) const;

  const RepSpec& in() const { return layers_.front().in(); }
  const RepSpec& out() const { return layers_.back().out(); }
  const std::vector<EqLinear>& layers() const { return layers_; }

 private:
  std::vector<EqLinear> layers_;
  bool activate_last_ = false;
};

/// A point set with positions measured relative to `center`.
struct PointSetView {
  Vec3 center = Vec3::Zero();
  std::span<const Vec3> positions;
  std::span<const double> features;  // kf per point
};

/// Rep of one lifted point: rho0 (rel z, features), then one rho_reg block of
/// inner products of rel xy with the u rotated unit vectors.
RepSpec point_input_rep(int kf, int u);

/// Writes the lifted point row for relative position `rel` (already divided by
/// the position scale).
template <typename T>
void lift_point(const Vec3& rel, std::span<const double> f, int u, T* row);

struct PointNetConfig {
  int kf = 3;
  int u = 4;
  std::vector<int> hidden_reg = {4, 4};  // regular multiplicities of the per-point layers
  RepSpec out = {4, 0, 0, 2};
  double scale = 1.0;  // positions are divided by this before lifting
  bool tied = true;
};

/// Shared per-point equivariant MLP, max-pool over the set, then a linear map
/// to the declared output rep. Only relative positions enter, so the output is
/// translation invariant; empty sets give the zero vector.
class EqPointNet {
 public:
  EqPointNet() = default;
  EqPointNet(ParamStore& store, const std::string& name, const PointNetConfig& cfg, Rng& rng);

  /// One output row per set; every set must be non-empty.
  template <typename T>
  Var forward_sets(Graph<T>& g, const std::vector<PointSetView>& sets) const;

  /// Stacked voxels: [out.dim(), Z, Y, X] with the encoding of each
  /// partition cell (relative to its voxel center) and zeros elsewhere.
  template <typename T>
  Var encode_grid(Graph<T>& g, const PointPartition& part) const;

  // PointSetEncoder interface (64-bit, no gradient).
  RepSpec output_rep() const { return cfg_.out; }
  std::vector<double> operator()(const Vec3& center, const VoxelCell& cell) const;

  const PointNetConfig& config() const { return cfg_; }

 private:
  PointNetConfig cfg_;
  EqMLP point_mlp_;
  EqLinear head_;
};

struct UNetConfig {
  RepSpec in = {4, 0, 0, 2};
  std::vector<int> widths = {1, 2, 4};  // regular multiplicity per level; depth = size - 1
  int kernel = 3;
  Padding padding = Padding::Circular;
  bool tied = true;
};

/// Encoder-decoder with skip connections. Down: 2x2x2 average pool then conv;
/// up: nearest upsample, concat skip, conv. Head: 1x1x1 conv to one trivial
/// logit channel.
class EqUNet {
 public:
  EqUNet() = default;
  EqUNet(ParamStore& store, const std::string& name, const UNetConfig& cfg, Rng& rng);

  /// x [in.dim(), Z, Y, X] -> logits [1, Z, Y, X]. Throws InvalidArgument when
  /// a spatial dim is not divisible by 2^depth.
  template <typename T>
  Var forward(Graph<T>& g, Var x) const;

  int depth() const { return static_cast<int>(cfg_.widths.size()) - 1; }
  const UNetConfig& config() const { return cfg_; }
  void set_padding(Padding p);

 private:
  UNetConfig cfg_;
  std::vector<EqConv3d> enc_, dec_;
  EqConv3d head_;
};

}  // namespace hep::nn
