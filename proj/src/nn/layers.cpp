#include "hep/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include "hep/error.hpp"

namespace hep::nn {

void require_pointwise(const RepSpec& rep, const std::string& where) {
  if (rep.n1 > 0)
    throw InvalidArgument(where + ": pointwise nonlinearity on rho1 features breaks equivariance; "
                                  "lift them to regular fields first");
}

template <typename T>
Var typed_silu(Graph<T>& g, Var x, const RepSpec& rep) {
  require_pointwise(rep, "typed_silu");
  return g.silu(x);
}

namespace {

Tying tie(TyingKind k, const RepSpec& in, const RepSpec& out, bool tied) {
  return {tied ? k : TyingKind::None, in, out};
}

}  // namespace

// --- EqLinear ---------------------------------------------------------------

EqLinear::EqLinear(ParamStore& store, const std::string& name, RepSpec in, RepSpec out, bool tied,
                   Rng& rng, bool bias)
    : in_(in), out_(out) {
  if (in.u != out.u) throw InvalidArgument(name + ": input and output group orders differ");
  if (in.dim() < 1 || out.dim() < 1) throw InvalidArgument(name + ": empty representation");
  w_ = &store.add(name + ".w", {out.dim(), in.dim()}, tie(TyingKind::Linear, in, out, tied), rng,
                  1.0 / std::sqrt(static_cast<double>(in.dim())));
  if (bias) b_ = &store.add_zeros(name + ".b", {out.dim()}, tie(TyingKind::Bias, in, out, tied));
}

template <typename T>
Var EqLinear::forward(Graph<T>& g, Var x) const {
  const auto& s = g.value(x).shape;
  if (s.size() != 2 || s[1] != in_.dim())
    throw InvalidArgument(w_->name + ": input has " + std::to_string(s.size() == 2 ? s[1] : -1) +
                          " channels, layer expects " + std::to_string(in_.dim()));
  return g.linear(x, g.param(*w_), b_ ? g.param(*b_) : Var{});
}

// --- EqConv3d ---------------------------------------------------------------

EqConv3d::EqConv3d(ParamStore& store, const std::string& name, RepSpec in, RepSpec out, int kernel,
                   Padding pad, bool tied, Rng& rng)
    : in_(in), out_(out), pad_(pad) {
  if (kernel < 1 || kernel % 2 == 0)
    throw InvalidArgument(name + ": kernel size must be odd, got " + std::to_string(kernel));
  if (in.u != out.u) throw InvalidArgument(name + ": input and output group orders differ");
  if (tied && 4 % in.u != 0)
    throw InexactTransform(name + ": kernel rotation is exact only when u divides 4");
  const int taps = kernel * kernel * kernel;
  w_ = &store.add(name + ".w", {out.dim(), in.dim(), kernel, kernel, kernel},
                  tie(TyingKind::Conv, in, out, tied), rng,
                  1.0 / std::sqrt(static_cast<double>(in.dim() * taps)));
  b_ = &store.add_zeros(name + ".b", {out.dim()}, tie(TyingKind::Bias, in, out, tied));
}

template <typename T>
Var EqConv3d::forward(Graph<T>& g, Var x) const {
  const auto& s = g.value(x).shape;
  if (s.size() != 4 || s[0] != in_.dim())
    throw InvalidArgument(w_->name + ": input grid channels do not match the layer input rep");
  return g.conv3d(x, g.param(*w_), g.param(*b_), pad_);
}

// --- EqMLP ------------------------------------------------------------------

EqMLP::EqMLP(ParamStore& store, const std::string& name, const std::vector<RepSpec>& reps, bool tied,
             Rng& rng, bool activate_last)
    : activate_last_(activate_last) {
  if (reps.size() < 2) throw InvalidArgument(name + ": need at least input and output reps");
  for (std::size_t i = 0; i + 1 < reps.size(); ++i) {
    const bool activated = i + 2 < reps.size() || activate_last;
    if (activated) require_pointwise(reps[i + 1], name);
    layers_.emplace_back(store, name + "." + std::to_string(i), reps[i], reps[i + 1], tied, rng);
  }
}

template <typename T>
Var EqMLP::forward(Graph<T>& g, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(g, x);
    if (i + 1 < layers_.size() || activate_last_) x = typed_silu(g, x, layers_[i].out());
  }
  return x;
}

// --- EqPointNet -------------------------------------------------------------

RepSpec point_input_rep(int kf, int u) { return {u, 1 + kf, 0, 1}; }

template <typename T>
void lift_point(const Vec3& rel, std::span<const double> f, int u, T* row) {
  row[0] = static_cast<T>(rel.z());
  for (std::size_t k = 0; k < f.size(); ++k) row[1 + k] = static_cast<T>(f[k]);
  T* reg = row + 1 + f.size();
  for (int k = 0; k < u; ++k) {
    // <(x, y), e_k>, e_k the unit vector at angle 2 pi k / u; exact for quarter turns.
    const auto [c, s] = cos_sin(k, u);
    reg[k] = static_cast<T>(c * rel.x() + s * rel.y());
  }
}

EqPointNet::EqPointNet(ParamStore& store, const std::string& name, const PointNetConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.hidden_reg.empty()) throw InvalidArgument(name + ": need at least one hidden layer");
  if (!(cfg.scale > 0.0)) throw InvalidArgument(name + ": position scale must be positive");
  if (cfg.out.u != cfg.u) throw InvalidArgument(name + ": output rep group order differs");
  std::vector<RepSpec> reps{point_input_rep(cfg.kf, cfg.u)};
  for (int h : cfg.hidden_reg) reps.push_back(RepSpec::regular(h, cfg.u));
  point_mlp_ = EqMLP(store, name + ".point", reps, cfg.tied, rng, true);
  head_ = EqLinear(store, name + ".head", reps.back(), cfg.out, cfg.tied, rng);
}

template <typename T>
Var EqPointNet::forward_sets(Graph<T>& g, const std::vector<PointSetView>& sets) const {
  const int width = point_input_rep(cfg_.kf, cfg_.u).dim();
  std::vector<int> offsets{0};
  for (const auto& s : sets) {
    if (s.positions.empty()) throw InvalidArgument("EqPointNet: empty point set");
    if (s.features.size() != s.positions.size() * static_cast<std::size_t>(cfg_.kf))
      throw InvalidArgument("EqPointNet: feature width does not match the configured kf");
    offsets.push_back(offsets.back() + static_cast<int>(s.positions.size()));
  }
  Tensor<T> rows({offsets.back(), width});
  std::size_t r = 0;
  const double inv = 1.0 / cfg_.scale;
  for (const auto& s : sets)
    for (std::size_t i = 0; i < s.positions.size(); ++i, ++r)
      lift_point<T>((s.positions[i] - s.center) * inv,
                    s.features.subspan(i * static_cast<std::size_t>(cfg_.kf), static_cast<std::size_t>(cfg_.kf)),
                    cfg_.u, rows.data.data() + r * static_cast<std::size_t>(width));
  Var h = point_mlp_.forward(g, g.constant(std::move(rows)));
  h = g.segment_max(h, std::move(offsets));
  return head_.forward(g, h);
}

template <typename T>
Var EqPointNet::encode_grid(Graph<T>& g, const PointPartition& part) const {
  const auto& d = part.spec.dims;
  const std::array<int, 3> zyx{d[2], d[1], d[0]};
  if (part.cells.empty()) return g.constant(Tensor<T>({cfg_.out.dim(), zyx[0], zyx[1], zyx[2]}));
  std::vector<PointSetView> sets;
  std::vector<int> cells;
  sets.reserve(part.cells.size());
  for (const auto& c : part.cells) {
    sets.push_back({part.spec.index_to_center(c.index), c.positions, c.features});
    cells.push_back(static_cast<int>(part.spec.linear(c.index)));
  }
  return g.scatter_rows(forward_sets(g, sets), std::move(cells), zyx);
}

std::vector<double> EqPointNet::operator()(const Vec3& center, const VoxelCell& cell) const {
  if (cell.positions.empty()) return std::vector<double>(static_cast<std::size_t>(cfg_.out.dim()), 0.0);
  Graph<double> g;
  const Var out = forward_sets(g, {PointSetView{center, cell.positions, cell.features}});
  return g.value(out).data;
}

// --- EqUNet -----------------------------------------------------------------

EqUNet::EqUNet(ParamStore& store, const std::string& name, const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.widths.empty()) throw InvalidArgument(name + ": need at least one level");
  const int u = cfg.in.u;
  RepSpec prev = cfg.in;
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    const RepSpec w = RepSpec::regular(cfg.widths[l], u);
    enc_.emplace_back(store, name + ".enc" + std::to_string(l), prev, w, cfg.kernel, cfg.padding, cfg.tied, rng);
    prev = w;
  }
  dec_.resize(cfg.widths.size() - 1);
  for (int l = static_cast<int>(cfg.widths.size()) - 2; l >= 0; --l) {
    const RepSpec cat = RepSpec::regular(cfg.widths[l + 1] + cfg.widths[l], u);
    dec_[l] = EqConv3d(store, name + ".dec" + std::to_string(l), cat, RepSpec::regular(cfg.widths[l], u),
                       cfg.kernel, cfg.padding, cfg.tied, rng);
  }
  head_ = EqConv3d(store, name + ".head", RepSpec::regular(cfg.widths[0], u), RepSpec::trivial(1, u), 1,
                   cfg.padding, cfg.tied, rng);
}

void EqUNet::set_padding(Padding p) {
  cfg_.padding = p;
  for (auto& c : enc_) c.set_padding(p);
  for (auto& c : dec_) c.set_padding(p);
  head_.set_padding(p);
}

template <typename T>
Var EqUNet::forward(Graph<T>& g, Var x) const {
  const auto& s = g.value(x).shape;
  const int f = 1 << depth();
  if (s.size() != 4 || s[1] % f || s[2] % f || s[3] % f)
    throw InvalidArgument("EqUNet: spatial dims must be divisible by 2^depth = " + std::to_string(f));
  std::vector<Var> skips;
  Var h = x;
  for (std::size_t l = 0; l < enc_.size(); ++l) {
    if (l > 0) h = g.avgpool2(h);
    h = typed_silu(g, enc_[l].forward(g, h), enc_[l].out());
    skips.push_back(h);
  }
  for (int l = depth() - 1; l >= 0; --l) {
    h = g.concat0({g.upsample2(h), skips[static_cast<std::size_t>(l)]});
    h = typed_silu(g, dec_[l].forward(g, h), dec_[l].out());
  }
  return head_.forward(g, h);
}

// --- instantiations ---------------------------------------------------------

#define HEP_INSTANTIATE(T)                                                              \
  template Var typed_silu<T>(Graph<T>&, Var, const RepSpec&);                           \
  template Var EqLinear::forward<T>(Graph<T>&, Var) const;                              \
  template Var EqConv3d::forward<T>(Graph<T>&, Var) const;                              \
  template Var EqMLP::forward<T>(Graph<T>&, Var) const;                                 \
  template void lift_point<T>(const Vec3&, std::span<const double>, int, T*);           \
  template Var EqPointNet::forward_sets<T>(Graph<T>&, const std::vector<PointSetView>&) const; \
  template Var EqPointNet::encode_grid<T>(Graph<T>&, const PointPartition&) const;      \
  template Var EqUNet::forward<T>(Graph<T>&, Var) const;

HEP_INSTANTIATE(float)
HEP_INSTANTIATE(double)

#undef HEP_INSTANTIATE

}  // namespace hep::nn
