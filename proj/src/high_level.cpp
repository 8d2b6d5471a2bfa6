#include "hep/high_level.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hep/error.hpp"
#include "hep/voxelizer.hpp"

namespace hep {

using nn::Graph;
using nn::Tensor;
using nn::Var;

RepSpec HighLevelConfig::input_rep() const {
  return stacked ? encoder_out : RepSpec::trivial(1 + kf, u);
}

void HighLevelConfig::validate() const {
  grid.validate();
  if (unet_widths.empty()) throw InvalidArgument("high level: unet_widths must not be empty");
  const int f = 1 << (unet_widths.size() - 1);
  for (int d : grid.dims)
    if (d % f)
      throw InvalidArgument("high level: grid dims must be divisible by 2^depth = " + std::to_string(f));
  if (encoder_out.u != u) throw InvalidArgument("high level: encoder rep group order differs from u");
  if (encoder_out.n1 > 0) throw InvalidArgument("high level: encoder output must be rho0/rho_reg typed");
}

namespace {

nn::PointNetConfig encoder_config(const HighLevelConfig& c) {
  nn::PointNetConfig p;
  p.kf = c.kf;
  p.u = c.u;
  p.hidden_reg = c.encoder_hidden;
  p.out = c.encoder_out;
  p.scale = c.grid.resolution;
  p.tied = c.tied;
  return p;
}

nn::UNetConfig unet_config(const HighLevelConfig& c) {
  nn::UNetConfig p;
  p.in = c.input_rep();
  p.widths = c.unet_widths;
  p.kernel = c.kernel;
  p.padding = c.padding;
  p.tied = c.tied;
  return p;
}

}  // namespace

HighLevelNet::HighLevelNet(nn::ParamStore& store, const HighLevelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  if (cfg.stacked) encoder_ = nn::EqPointNet(store, "high.enc", encoder_config(cfg), rng);
  unet_ = nn::EqUNet(store, "high.unet", unet_config(cfg), rng);
}

void HighLevelNet::set_padding(nn::Padding p) {
  cfg_.padding = p;
  unet_.set_padding(p);
}

template <typename T>
Var HighLevelNet::forward(Graph<T>& g, const PointCloud& cloud) const {
  if (cloud.empty()) throw InvalidArgument("high_forward: observation cloud is empty");
  if (cloud.feature_width() != cfg_.kf)
    throw InvalidArgument("high_forward: cloud feature width " + std::to_string(cloud.feature_width()) +
                          " does not match kf = " + std::to_string(cfg_.kf));
  Var x;
  if (cfg_.stacked) {
    x = encoder_.encode_grid(g, partition(cloud, cfg_.grid));
  } else {
    const VoxelGrid r = rasterize(cloud, cfg_.grid, RasterMode::OccupancyAndMean, cfg_.u);
    const auto& d = cfg_.grid.dims;
    Tensor<T> t({r.channels(), d[2], d[1], d[0]});
    std::transform(r.data().begin(), r.data().end(), t.data.begin(), [](double v) { return static_cast<T>(v); });
    x = g.constant(std::move(t));
  }
  return unet_.forward(g, x);
}

template Var HighLevelNet::forward<float>(Graph<float>&, const PointCloud&) const;
template Var HighLevelNet::forward<double>(Graph<double>&, const PointCloud&) const;

VoxelGrid high_forward(const HighLevelNet& net, const Observation& obs) {
  Graph<double> g;
  const Var y = net.forward(g, obs.cloud);
  VoxelGrid hm(net.config().grid, RepSpec::trivial(1, net.config().u));
  hm.data() = g.value(y).data;
  for (double v : hm.data())
    if (!std::isfinite(v)) throw NumericalError("high_forward: non-finite logit");
  return hm;
}

std::size_t argmax_voxel(const VoxelGrid& heatmap) {
  const auto& d = heatmap.data();
  if (d.empty()) throw InvalidArgument("argmax_voxel: empty heatmap");
  // max_element returns the first maximum, i.e. the lowest linear index.
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

double argmax_margin(const VoxelGrid& heatmap) {
  const auto& d = heatmap.data();
  const std::size_t best = argmax_voxel(heatmap);
  double second = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (i != best) second = std::max(second, d[i]);
  return d[best] - second;
}

Vec3 select_keypose(const VoxelGrid& heatmap) {
  const auto& spec = heatmap.spec();
  return spec.index_to_center(spec.unravel(argmax_voxel(heatmap)));
}

std::size_t make_target(const VoxelGridSpec& spec, const Vec3& t_star) {
  const auto j = spec.world_to_index(t_star);
  if (!j) {
    std::ostringstream os;
    os << "make_target: keypose (" << t_star.x() << ", " << t_star.y() << ", " << t_star.z()
       << ") lies outside the observation grid";
    throw InvalidArgument(os.str());
  }
  return spec.linear(*j);
}

double loss_high(const VoxelGrid& heatmap, std::size_t target) {
  Graph<double> g;
  nn::Tensor<double> t({static_cast<int>(heatmap.data().size())});
  t.data = heatmap.data();
  return g.value(g.cross_entropy(g.constant(std::move(t)), target)).data[0];
}

std::vector<double> heatmap_probabilities(const VoxelGrid& heatmap) {
  const auto& d = heatmap.data();
  const double mx = *std::max_element(d.begin(), d.end());
  std::vector<double> p(d.size());
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += (p[i] = std::exp(d[i] - mx));
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace hep
