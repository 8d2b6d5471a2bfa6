#include "hep/nn/param.hpp"

#include <cmath>
#include <string>

#include "hep/error.hpp"

namespace hep::nn {

std::string to_string(TyingKind k) {
  switch (k) {
    case TyingKind::None: return "none";
    case TyingKind::Linear: return "linear";
    case TyingKind::Bias: return "bias";
    case TyingKind::Conv: return "conv";
  }
  return "none";
}

TyingKind tying_kind_from_string(const std::string& s) {
  if (s == "none") return TyingKind::None;
  if (s == "linear") return TyingKind::Linear;
  if (s == "bias") return TyingKind::Bias;
  if (s == "conv") return TyingKind::Conv;
  throw FormatError("unknown tying kind '" + s + "'");
}

namespace {

std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

// a <- rho_out(m) a rho_in(m)^-1 for a row-major [out, in] block, using a
// scratch buffer of the same size.
void conjugate(const Tying& t, int m, const double* a, double* tmp, double* out) {
  const int no = t.out.dim(), ni = t.in.dim();
  // Rows: a[o, :] rho_in^-1 = (rho_in a[o, :]^T)^T since rho_in is orthogonal.
  for (int o = 0; o < no; ++o) apply_rep_strided<double>(t.in, m, a + o * ni, tmp + o * ni, 1);
  for (int i = 0; i < ni; ++i) apply_rep_strided<double>(t.out, m, tmp + i, out + i, ni);
}

std::vector<double> project_linear(const Tying& t, const std::vector<double>& w) {
  const int u = t.in.u;
  std::vector<double> acc(w.size(), 0.0), tmp(w.size()), rot(w.size());
  for (int m = 0; m < u; ++m) {
    conjugate(t, m, w.data(), tmp.data(), rot.data());
    for (std::size_t i = 0; i < w.size(); ++i) acc[i] += rot[i];
  }
  for (double& v : acc) v /= u;
  return acc;
}

std::vector<double> project_bias(const Tying& t, const std::vector<double>& b) {
  const int u = t.out.u;
  std::vector<double> acc(b.size(), 0.0), rot(b.size());
  for (int m = 0; m < u; ++m) {
    apply_rep_strided<double>(t.out, m, b.data(), rot.data(), 1);
    for (std::size_t i = 0; i < b.size(); ++i) acc[i] += rot[i];
  }
  for (double& v : acc) v /= u;
  return acc;
}

std::vector<double> project_conv(const Tying& t, const std::vector<int>& shape,
                                 const std::vector<double>& w) {
  const int u = t.in.u;
  const int no = shape[0], ni = shape[1], k = shape[2], r = k / 2;
  const std::size_t block = static_cast<std::size_t>(no) * ni;
  const int taps = k * k * k;
  // Regroup as [tap][out][in] so each tap is a contiguous matrix.
  std::vector<double> by_tap(w.size());
  for (int o = 0; o < no; ++o)
    for (int i = 0; i < ni; ++i)
      for (int p = 0; p < taps; ++p)
        by_tap[p * block + o * ni + i] = w[(static_cast<std::size_t>(o) * ni + i) * taps + p];

  std::vector<double> acc(w.size(), 0.0), tmp(block), rot(block);
  for (int m = 0; m < u; ++m) {
    const GroupElement g = GroupElement::rotation(m, u);
    if (!g.is_quarter_turn())
      throw InexactTransform("conv weight tying needs quarter-turn rotations (u must divide 4)");
    const auto [c, s] = cos_sin(m, u);
    const int ci = static_cast<int>(c), si = static_cast<int>(s);
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          // source tap R^-1 d
          const int sx = ci * dx + si * dy, sy = -si * dx + ci * dy;
          const int src = ((dz + r) * k + (sy + r)) * k + (sx + r);
          const int dst = ((dz + r) * k + (dy + r)) * k + (dx + r);
          conjugate(t, m, by_tap.data() + src * block, tmp.data(), rot.data());
          double* a = acc.data() + dst * block;
          for (std::size_t i = 0; i < block; ++i) a[i] += rot[i];
        }
  }
  std::vector<double> out(w.size());
  for (int o = 0; o < no; ++o)
    for (int i = 0; i < ni; ++i)
      for (int p = 0; p < taps; ++p)
        out[(static_cast<std::size_t>(o) * ni + i) * taps + p] = acc[p * block + o * ni + i] / u;
  return out;
}

void check_shape(const Tying& t, const std::vector<int>& shape, std::size_t n) {
  if (numel(shape) != n) throw InvalidArgument("parameter size does not match its shape");
  switch (t.kind) {
    case TyingKind::None: return;
    case TyingKind::Linear:
      if (shape.size() != 2 || shape[0] != t.out.dim() || shape[1] != t.in.dim() || t.in.u != t.out.u)
        throw InvalidArgument("linear tying: shape does not match [out.dim, in.dim]");
      return;
    case TyingKind::Bias:
      if (shape.size() != 1 || shape[0] != t.out.dim())
        throw InvalidArgument("bias tying: shape does not match [out.dim]");
      return;
    case TyingKind::Conv:
      if (shape.size() != 5 || shape[0] != t.out.dim() || shape[1] != t.in.dim() ||
          shape[2] != shape[3] || shape[3] != shape[4] || shape[2] % 2 == 0 || t.in.u != t.out.u)
        throw InvalidArgument("conv tying: shape must be [out.dim, in.dim, k, k, k] with odd k");
      return;
  }
}

}  // namespace

std::vector<double> project(const Tying& tying, const std::vector<int>& shape,
                            const std::vector<double>& raw) {
  check_shape(tying, shape, raw.size());
  switch (tying.kind) {
    case TyingKind::None: return raw;
    case TyingKind::Linear: return project_linear(tying, raw);
    case TyingKind::Bias: return project_bias(tying, raw);
    case TyingKind::Conv: return project_conv(tying, shape, raw);
  }
  return raw;
}

const std::vector<double>& Parameter::effective() const {
  if (cache_eff_.empty() || cache_raw_ != value) {
    cache_eff_ = project(tying, shape, value);
    cache_raw_ = value;
  }
  return cache_eff_;
}

Parameter& ParamStore::add(const std::string& name, std::vector<int> shape, Tying tying, Rng& rng,
                           double std) {
  Parameter& p = add_zeros(name, std::move(shape), tying);
  for (double& v : p.value) v = rng.normal();
  const std::vector<double> eff = project(p.tying, p.shape, p.value);
  double ss = 0.0;
  for (double v : eff) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(eff.size()));
  if (rms > 0.0)
    for (double& v : p.value) v *= std / rms;
  return p;
}

Parameter& ParamStore::add_zeros(const std::string& name, std::vector<int> shape, Tying tying) {
  if (find(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  Parameter p;
  p.name = name;
  p.shape = std::move(shape);
  p.tying = tying;
  p.value.assign(numel(p.shape), 0.0);
  p.grad.assign(p.value.size(), 0.0);
  check_shape(p.tying, p.shape, p.value.size());
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

double ParamStore::grad_norm() const {
  double ss = 0.0;
  for (const auto& p : params_)
    for (double g : p.grad) ss += g * g;
  return std::sqrt(ss);
}

void adamw_step(ParamStore& store, AdamState& state, const AdamWConfig& cfg) {
  auto& params = store.params();
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw InvalidArgument("adamw_step: optimizer state has " + std::to_string(state.m.size()) +
                          " blocks, model has " + std::to_string(params.size()));
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    Parameter& p = params[b];
    auto& m = state.m[b];
    auto& v = state.v[b];
    if (m.size() != p.size() || v.size() != p.size() || p.grad.size() != p.size())
      throw InvalidArgument("adamw_step: shape mismatch in block '" + p.name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      p.value[i] *= 1.0 - cfg.lr * cfg.wd;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p.value[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
}

}  // namespace hep::nn
