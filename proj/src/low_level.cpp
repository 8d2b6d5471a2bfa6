#include "hep/low_level.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hep/error.hpp"

namespace hep {

using nn::Graph;
using nn::Tensor;
using nn::Var;

// --- schedule ---------------------------------------------------------------

DiffusionSchedule DiffusionSchedule::linear(int K, double beta_1, double beta_K) {
  if (K < 1) throw InvalidArgument("diffusion schedule: K must be >= 1");
  if (!(beta_1 > 0.0 && beta_K < 1.0 && beta_1 <= beta_K))
    throw InvalidArgument("diffusion schedule: need 0 < beta_1 <= beta_K < 1");
  DiffusionSchedule s;
  s.K = K;
  s.beta.assign(static_cast<std::size_t>(K) + 1, 0.0);
  s.alpha.assign(static_cast<std::size_t>(K) + 1, 1.0);
  s.alpha_bar.assign(static_cast<std::size_t>(K) + 1, 1.0);
  for (int k = 1; k <= K; ++k) {
    s.beta[k] = K == 1 ? beta_1 : beta_1 + (beta_K - beta_1) * (k - 1) / (K - 1);
    s.alpha[k] = 1.0 - s.beta[k];
    s.alpha_bar[k] = s.alpha_bar[k - 1] * s.alpha[k];
  }
  return s;
}

double DiffusionSchedule::posterior_variance(int k) const {
  if (k <= 1) return 0.0;
  return beta[k] * (1.0 - alpha_bar[k - 1]) / (1.0 - alpha_bar[k]);
}

// --- action codec -----------------------------------------------------------

namespace {

/// rho0 part (4) and rho1 part (6) of one gripper state.
void encode_state(const GripperState& s, double inv_scale, double* r0, double* r1) {
  r0[0] = s.position.z() * inv_scale;
  r0[1] = s.q(2, 0);
  r0[2] = s.q(2, 1);
  r0[3] = 2.0 * s.c - 1.0;
  r1[0] = s.position.x() * inv_scale;
  r1[1] = s.position.y() * inv_scale;
  r1[2] = s.q(0, 0);
  r1[3] = s.q(1, 0);
  r1[4] = s.q(0, 1);
  r1[5] = s.q(1, 1);
}

double dot3(const Vec3& a, const Vec3& b) { return a.x() * b.x() + a.y() * b.y() + a.z() * b.z(); }

Mat3 gram_schmidt(const Vec3& a, const Vec3& b) {
  const double na = std::sqrt(dot3(a, a));
  const Vec3 c1 = na > 1e-12 ? Vec3(a / na) : Vec3::UnitX();
  Vec3 c2 = b - dot3(c1, b) * c1;
  double n2 = std::sqrt(dot3(c2, c2));
  if (n2 <= 1e-12) {
    c2 = Vec3::UnitZ() - c1.z() * c1;
    n2 = std::sqrt(dot3(c2, c2));
    if (n2 <= 1e-12) {
      c2 = Vec3::UnitX() - c1.x() * c1;
      n2 = std::sqrt(dot3(c2, c2));
    }
  }
  c2 /= n2;
  Mat3 q;
  q.col(0) = c1;
  q.col(1) = c2;
  q.col(2) = c1.cross(c2);
  return q;
}

}  // namespace

std::vector<double> ActionCodec::encode(const ActionChunk& a) const {
  if (static_cast<int>(a.size()) != m)
    throw InvalidArgument("action codec: chunk has " + std::to_string(a.size()) + " steps, expected " +
                          std::to_string(m));
  std::vector<double> v(static_cast<std::size_t>(dim()));
  for (int i = 0; i < m; ++i) encode_state(a.steps[i], 1.0 / pos_scale, &v[4 * i], &v[4 * m + 6 * i]);
  return v;
}

ActionChunk ActionCodec::decode(std::span<const double> v) const {
  if (static_cast<int>(v.size()) != dim()) throw InvalidArgument("action codec: vector has the wrong length");
  ActionChunk a;
  a.steps.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double* r0 = &v[4 * i];
    const double* r1 = &v[4 * m + 6 * i];
    auto& s = a.steps[i];
    s.position = snap_to_lattice(Vec3(r1[0] * pos_scale, r1[1] * pos_scale, r0[0] * pos_scale));
    s.q = gram_schmidt({r1[2], r1[3], r0[1]}, {r1[4], r1[5], r0[2]});
    s.c = std::clamp(0.5 * (r0[3] + 1.0), 0.0, 1.0);
  }
  return a;
}

// --- frame transfer ---------------------------------------------------------

Observation frame_transfer_obs(const Observation& o, const Vec3& t) {
  Observation r = o;
  for (std::size_t i = 0; i < r.cloud.size(); ++i) r.cloud.position(i) -= t;
  for (auto& s : r.state_history) s.position -= t;
  for (auto& s : r.action_history) s.position -= t;
  return r;
}

ActionChunk frame_transfer_action(const ActionChunk& a, const Vec3& t) {
  ActionChunk r = a;
  for (auto& s : r.steps) s.position -= t;
  return r;
}

std::vector<double> ddpm_forward(const DiffusionSchedule& s, std::span<const double> a0, int k,
                                 std::span<const double> noise) {
  if (k < 1 || k > s.K)
    throw InvalidArgument("ddpm_forward: step " + std::to_string(k) + " outside 1.." + std::to_string(s.K));
  if (a0.size() != noise.size()) throw InvalidArgument("ddpm_forward: noise shape differs from a0");
  const double sa = std::sqrt(s.alpha_bar[k]), sn = std::sqrt(1.0 - s.alpha_bar[k]);
  std::vector<double> out(a0.size());
  for (std::size_t i = 0; i < a0.size(); ++i) out[i] = sa * a0[i] + sn * noise[i];
  return out;
}

// --- noise predictor --------------------------------------------------------

void LowLevelConfig::validate() const {
  if (m < 1) throw InvalidArgument("low level: horizon m must be >= 1");
  if (t_hist < 1 || t_act < 0) throw InvalidArgument("low level: need t_hist >= 1 and t_act >= 0");
  if (!(pos_scale > 0.0)) throw InvalidArgument("low level: pos_scale must be positive");
  if (frame_transfer && !(crop > 0.0)) throw InvalidArgument("low level: crop must be positive");
  if (hidden < 1 || layers < 1) throw InvalidArgument("low level: hidden width and layer count must be >= 1");
  if (time_dim < 2 || time_dim % 2) throw InvalidArgument("low level: time_dim must be even and >= 2");
  if (obs_out.u != u || obs_out.n1 > 0) throw InvalidArgument("low level: obs_out must be rho0/rho_reg with group order u");
  DiffusionSchedule::linear(K, beta_1, beta_K);
}

namespace {

int history_len(const LowLevelConfig& c) { return c.t_hist + c.t_act; }

struct CroppedSet {
  std::vector<Vec3> positions;
  std::vector<double> features;
};

CroppedSet crop_cloud(const PointCloud& cloud, const LowLevelConfig& c) {
  CroppedSet s;
  const auto kf = static_cast<std::size_t>(cloud.feature_width());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.position(i);
    if (c.frame_transfer && p.cwiseAbs().maxCoeff() >= c.crop) continue;
    s.positions.push_back(p);
    const auto f = cloud.features(i);
    s.features.insert(s.features.end(), f.begin(), f.end());
  }
  if (s.positions.empty()) {
    // A single featureless point at the keypose keeps the set non-empty and
    // is fixed by every rotation.
    s.positions.push_back(Vec3::Zero());
    s.features.assign(kf, 0.0);
  }
  return s;
}

}  // namespace

EpsNet::EpsNet(nn::ParamStore& store, const LowLevelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  nn::PointNetConfig pc;
  pc.kf = cfg.kf;
  pc.u = cfg.u;
  pc.hidden_reg = cfg.obs_hidden;
  pc.out = cfg.obs_out;
  pc.scale = cfg.frame_transfer ? cfg.crop : cfg.pos_scale;
  pc.tied = cfg.tied;
  obs_net_ = nn::EqPointNet(store, "low.obs", pc, rng);

  std::vector<RepSpec> reps{input_rep()};
  for (int l = 0; l < cfg.layers; ++l) reps.push_back(RepSpec::regular(cfg.hidden, cfg.u));
  reps.push_back(cfg.codec().rep());
  mlp_ = nn::EqMLP(store, "low.eps", reps, cfg.tied, rng);

  // concat_cols gives [obs rho0 | obs reg | host rho0 | host rho1]; the MLP
  // expects [rho0 | rho1 | reg].
  const RepSpec in = input_rep();
  const int n0o = cfg.obs_out.n0, nro = cfg.u * cfg.obs_out.nreg;
  const int h0 = in.n0 - n0o, h1 = 2 * in.n1;
  for (int i = 0; i < n0o; ++i) perm_.push_back(i);
  for (int i = 0; i < h0; ++i) perm_.push_back(n0o + nro + i);
  for (int i = 0; i < h1; ++i) perm_.push_back(n0o + nro + h0 + i);
  for (int i = 0; i < nro; ++i) perm_.push_back(n0o + i);
}

RepSpec EpsNet::input_rep() const {
  const int nh = history_len(cfg_);
  const int extra = cfg_.frame_transfer ? 0 : 1;
  return {cfg_.u, cfg_.obs_out.n0 + 4 * nh + extra + cfg_.time_dim + 4 * cfg_.m, 3 * nh + extra + 3 * cfg_.m,
          cfg_.obs_out.nreg};
}

template <typename T>
Var EpsNet::encode_obs(Graph<T>& g, const std::vector<const Observation*>& obs) const {
  std::vector<CroppedSet> sets;
  sets.reserve(obs.size());
  for (const auto* o : obs) {
    if (o->cloud.feature_width() != cfg_.kf) throw InvalidArgument("low level: cloud feature width differs from kf");
    sets.push_back(crop_cloud(o->cloud, cfg_));
  }
  std::vector<nn::PointSetView> views;
  for (const auto& s : sets) views.push_back({Vec3::Zero(), s.positions, s.features});
  return obs_net_.forward_sets(g, views);
}

template <typename T>
Var EpsNet::head(Graph<T>& g, Var obs_feat, const std::vector<const Observation*>& obs, const std::vector<Vec3>& cond,
                 const Tensor<T>& a_k, const std::vector<int>& k) const {
  const int B = static_cast<int>(obs.size());
  const int m = cfg_.m, td = cfg_.time_dim;
  const bool noft = !cfg_.frame_transfer;
  if (a_k.rank() != 2 || a_k.dim(0) != B || a_k.dim(1) != 10 * m)
    throw InvalidArgument("noise predictor: a_k must be [batch, 10 m]");
  if (static_cast<int>(k.size()) != B || (noft && static_cast<int>(cond.size()) != B))
    throw InvalidArgument("noise predictor: batch sizes differ");
  const RepSpec in = input_rep();
  const int h0 = in.n0 - cfg_.obs_out.n0, h1 = 2 * in.n1, width = h0 + h1;
  const double inv = 1.0 / cfg_.pos_scale;

  Tensor<T> host({B, width});
  std::vector<double> r0(4), r1(6);
  for (int b = 0; b < B; ++b) {
    const Observation& o = *obs[b];
    if (static_cast<int>(o.state_history.size()) != cfg_.t_hist ||
        static_cast<int>(o.action_history.size()) != cfg_.t_act)
      throw InvalidArgument("noise predictor: observation history lengths differ from the config");
    if (k[b] < 1 || k[b] > cfg_.K) throw InvalidArgument("noise predictor: step k out of range");
    T* row = host.data.data() + static_cast<std::size_t>(b) * width;
    T* p0 = row;
    T* p1 = row + h0;
    auto put_state = [&](const GripperState& s) {
      encode_state(s, inv, r0.data(), r1.data());
      for (double v : r0) *p0++ = static_cast<T>(v);
      for (double v : r1) *p1++ = static_cast<T>(v);
    };
    for (const auto& s : o.state_history) put_state(s);
    for (const auto& s : o.action_history) put_state(s);
    if (noft) {
      *p0++ = static_cast<T>(cond[b].z() * inv);
      *p1++ = static_cast<T>(cond[b].x() * inv);
      *p1++ = static_cast<T>(cond[b].y() * inv);
    }
    const int half = td / 2;
    for (int j = 0; j < half; ++j) {
      const double f = std::exp(-std::log(1000.0) * j / half);
      p0[j] = static_cast<T>(std::sin(k[b] * f));
      p0[half + j] = static_cast<T>(std::cos(k[b] * f));
    }
    p0 += td;
    const T* a = a_k.data.data() + static_cast<std::size_t>(b) * 10 * m;
    p0 = std::copy(a, a + 4 * m, p0);
    p1 = std::copy(a + 4 * m, a + 10 * m, p1);
  }
  const Var x = g.permute_cols(g.concat_cols({obs_feat, g.constant(std::move(host))}), perm_);
  return mlp_.forward(g, x);
}

template <typename T>
Var EpsNet::forward(Graph<T>& g, const std::vector<const Observation*>& obs, const std::vector<Vec3>& cond,
                    const Tensor<T>& a_k, const std::vector<int>& k) const {
  if (obs.empty()) throw InvalidArgument("noise predictor: empty batch");
  return head(g, encode_obs(g, obs), obs, cond, a_k, k);
}

NoisePredictor::Bound EpsNet::bind(const Observation& o_star, const Vec3& cond) const {
  auto obs = std::make_shared<Observation>(o_star);
  Tensor<double> feat;
  {
    Graph<double> g;
    feat = g.value(encode_obs(g, {obs.get()}));
  }
  const DiffusionSchedule sched = cfg_.schedule();
  return [this, obs, cond, feat, sched](std::span<const double> a, int k) {
    Graph<double> g;
    Tensor<double> ak({1, static_cast<int>(a.size())}, std::vector<double>(a.begin(), a.end()));
    const Var y = head(g, g.constant(feat), {obs.get()}, {cond}, ak, {k});
    std::vector<double> out = g.value(y).data;
    if (cfg_.target == LowLevelConfig::Target::Sample) {
      const double c0 = std::sqrt(sched.alpha_bar[k]), s = std::sqrt(1.0 - sched.alpha_bar[k]);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = (a[i] - c0 * out[i]) / s;
    }
    return out;
  };
}

// --- sampling ---------------------------------------------------------------

SampleNoise draw_noise(int dim, int K, Rng& rng) {
  SampleNoise n;
  auto draw = [&] {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (auto& x : v) x = rng.normal();
    return v;
  };
  n.init = draw();
  n.steps.resize(static_cast<std::size_t>(K) + 1);
  for (int k = K; k >= 2; --k) n.steps[k] = draw();
  return n;
}

SampleNoise transform_noise(const SampleNoise& n, const RepSpec& rep, int m) {
  SampleNoise r = n;
  apply_rep<double>(rep, m, r.init);
  for (auto& s : r.steps)
    if (!s.empty()) apply_rep<double>(rep, m, s);
  return r;
}

namespace {

void check_finite(const std::vector<double>& v, int k, const char* what) {
  double mag = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) {
      std::ostringstream os;
      os << "sample_trajectory: non-finite " << what << " at denoising step " << k << " (max |x| before = " << mag
         << ")";
      throw NumericalError(os.str());
    }
    mag = std::max(mag, std::abs(x));
  }
}

}  // namespace

ActionChunk sample_trajectory(const NoisePredictor& eps, const DiffusionSchedule& s, const ActionCodec& codec,
                              const Observation& o_star, const Vec3& cond, const SampleNoise& noise) {
  if (static_cast<int>(noise.init.size()) != codec.dim() || static_cast<int>(noise.steps.size()) != s.K + 1)
    throw InvalidArgument("sample_trajectory: noise does not match the codec/schedule");
  const auto f = eps.bind(o_star, cond);
  std::vector<double> x = noise.init;
  for (int k = s.K; k >= 1; --k) {
    const std::vector<double> e = f(x, k);
    if (e.size() != x.size()) throw InvalidArgument("sample_trajectory: predictor returned the wrong width");
    check_finite(e, k, "noise prediction");
    const double c1 = 1.0 / std::sqrt(s.alpha[k]);
    const double c2 = s.beta[k] / std::sqrt(1.0 - s.alpha_bar[k]);
    const double sigma = std::sqrt(s.posterior_variance(k));
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = c1 * (x[i] - c2 * e[i]);
      if (k > 1) x[i] += sigma * noise.steps[k][i];
    }
    check_finite(x, k, "sample");
  }
  return codec.decode(x);
}

ActionChunk sample_trajectory(const NoisePredictor& eps, const DiffusionSchedule& s, const ActionCodec& codec,
                              const Observation& o_star, const Vec3& cond, Rng& rng) {
  return sample_trajectory(eps, s, codec, o_star, cond, draw_noise(codec.dim(), s.K, rng));
}

ActionChunk pi_low(const LowLevelPolicy& low, const Observation& o, const Vec3& t_high, const SampleNoise& noise) {
  if (!low.eps) throw InvalidArgument("pi_low: no noise predictor");
  const ActionCodec codec = low.cfg.codec();
  if (!low.cfg.frame_transfer) return sample_trajectory(*low.eps, low.sched, codec, o, t_high, noise);
  // In the keypose frame the keypose is the origin.
  const ActionChunk local =
      sample_trajectory(*low.eps, low.sched, codec, frame_transfer_obs(o, t_high), Vec3::Zero(), noise);
  return frame_transfer_action(local, -t_high);
}

ActionChunk pi_low(const LowLevelPolicy& low, const Observation& o, const Vec3& t_high, Rng& rng) {
  return pi_low(low, o, t_high, draw_noise(low.cfg.codec().dim(), low.sched.K, rng));
}

PolicyOutput pi_full(const HighLevelNet& high, const LowLevelPolicy& low, const Observation& o,
                     const SampleNoise& noise) {
  const VoxelGrid hm = high_forward(high, o);
  PolicyOutput out;
  out.keypose = select_keypose(hm);
  out.margin = argmax_margin(hm);
  out.chunk = pi_low(low, o, out.keypose, noise);
  return out;
}

PolicyOutput pi_full(const HighLevelNet& high, const LowLevelPolicy& low, const Observation& o, Rng& rng) {
  return pi_full(high, low, o, draw_noise(low.cfg.codec().dim(), low.sched.K, rng));
}

PolicyOutput pi_noft_variant(const HighLevelNet& high, const LowLevelPolicy& low, const Observation& o, Rng& rng) {
  if (low.cfg.frame_transfer) throw InvalidArgument("pi_noft_variant: low level is configured with frame transfer");
  return pi_full(high, low, o, rng);
}

// --- training ---------------------------------------------------------------

LowBatch make_low_batch(const LowLevelConfig& cfg, const DiffusionSchedule& sched,
                        const std::vector<const Observation*>& obs, const std::vector<const ActionChunk*>& chunks,
                        Rng& rng) {
  if (obs.size() != chunks.size() || obs.empty()) throw InvalidArgument("make_low_batch: mismatched batch");
  const ActionCodec codec = cfg.codec();
  LowBatch b;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Vec3 t_n = chunks[i]->steps.back().position;
    std::vector<double> a0;
    if (cfg.frame_transfer) {
      b.obs.push_back(frame_transfer_obs(*obs[i], t_n));
      a0 = codec.encode(frame_transfer_action(*chunks[i], t_n));
    } else {
      b.obs.push_back(*obs[i]);
      a0 = codec.encode(*chunks[i]);
    }
    b.cond.push_back(cfg.frame_transfer ? Vec3::Zero() : t_n);
    const int k = rng.uniform_int(1, sched.K);
    std::vector<double> e(a0.size());
    for (auto& x : e) x = rng.normal();
    const auto ak = ddpm_forward(sched, a0, k, e);
    b.k.push_back(k);
    b.a0.insert(b.a0.end(), a0.begin(), a0.end());
    b.a_k.insert(b.a_k.end(), ak.begin(), ak.end());
    b.noise.insert(b.noise.end(), e.begin(), e.end());
  }
  return b;
}

template <typename T>
Var loss_low(Graph<T>& g, const EpsNet& net, const LowBatch& batch) {
  const int B = static_cast<int>(batch.obs.size());
  const int d = net.config().codec().dim();
  std::vector<const Observation*> obs;
  for (const auto& o : batch.obs) obs.push_back(&o);
  const auto& target = net.config().target == LowLevelConfig::Target::Sample ? batch.a0 : batch.noise;
  Tensor<T> ak({B, d}), t({B, d});
  std::transform(batch.a_k.begin(), batch.a_k.end(), ak.data.begin(), [](double v) { return static_cast<T>(v); });
  std::transform(target.begin(), target.end(), t.data.begin(), [](double v) { return static_cast<T>(v); });
  return g.mse(net.forward(g, obs, batch.cond, ak, batch.k), t);
}

template Var EpsNet::forward<float>(Graph<float>&, const std::vector<const Observation*>&, const std::vector<Vec3>&,
                                    const Tensor<float>&, const std::vector<int>&) const;
template Var EpsNet::forward<double>(Graph<double>&, const std::vector<const Observation*>&, const std::vector<Vec3>&,
                                     const Tensor<double>&, const std::vector<int>&) const;
template Var loss_low<float>(Graph<float>&, const EpsNet&, const LowBatch&);
template Var loss_low<double>(Graph<double>&, const EpsNet&, const LowBatch&);

// --- stub -------------------------------------------------------------------

NoisePredictor::Bound TranslationSensitiveStub::bind(const Observation& o_star, const Vec3& cond) const {
  double s = cond.x() - 0.5 * cond.y() + 0.25 * cond.z();
  for (const auto& p : o_star.cloud.positions()) s += p.x() + 2.0 * p.y() + 3.0 * p.z();
  for (const auto& st : o_star.state_history) s += 5.0 * st.position.x() - st.position.z();
  return [s](std::span<const double> a, int k) {
    std::vector<double> e(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) e[i] = 0.5 * a[i] + 0.2 * std::sin(17.0 * s + 0.3 * i + 0.1 * k);
    return e;
  };
}

}  // namespace hep
