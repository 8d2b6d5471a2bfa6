#include "hep/audit.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "hep/error.hpp"
#include "hep/nn/gradcheck.hpp"
#include "hep/voxelizer.hpp"

namespace hep {

bool AuditReport::ok() const { return first_failure() == nullptr; }

const AuditCheck* AuditReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.pass()) return &c;
  return nullptr;
}

std::string AuditReport::csv() const {
  std::ostringstream os;
  os << "check,residual,tolerance,compared,status\n";
  os.precision(6);
  for (const auto& c : checks)
    os << c.name << ',' << std::scientific << c.residual << ',' << c.tolerance << ',' << c.compared << ','
       << (c.pass() ? "pass" : "FAIL") << '\n';
  return os.str();
}

PointCloud random_interior_cloud(Rng& rng, std::size_t n, const Vec3& lo, const Vec3& hi, int kf) {
  auto coord = [&](double a, double b) {
    const int k0 = static_cast<int>(std::ceil((a * 0x1.0p11 - 1.0) / 2.0));
    const int k1 = static_cast<int>(std::floor((b * 0x1.0p11 - 1.0) / 2.0));
    return (2 * rng.uniform_int(k0, k1) + 1) * 0x1.0p-11;
  };
  PointCloud c(kf);
  std::vector<double> f(static_cast<std::size_t>(kf));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : f) v = rng.uniform();
    c.add(Vec3(coord(lo.x(), hi.x()), coord(lo.y(), hi.y()), coord(lo.z(), hi.z())), f);
  }
  return c;
}

namespace {

double state_residual(const GripperState& a, const GripperState& b) {
  double d = (a.position - b.position).cwiseAbs().maxCoeff();
  d = std::max(d, (a.q - b.q).cwiseAbs().maxCoeff());
  return std::max(d, std::abs(a.c - b.c));
}

bool bit_equal(const GripperState& x, const GripperState& y) {
  return std::memcmp(x.position.data(), y.position.data(), 3 * sizeof(double)) == 0 &&
         std::memcmp(x.q.data(), y.q.data(), 9 * sizeof(double)) == 0 && std::memcmp(&x.c, &y.c, sizeof(double)) == 0;
}

double grid_residual(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.data().size() != b.data().size()) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

Vec3 random_vec(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

GripperState random_state(Rng& rng, double extent) {
  GripperState s;
  s.position = snap_to_lattice(random_vec(rng, -extent, extent));
  s.q = random_rotation(rng);
  s.c = rng.uniform();
  return s;
}

Observation random_observation(Rng& rng, std::size_t n, int t_hist, int t_act) {
  Observation o;
  o.cloud = PointCloud(3);
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, 3> f{rng.uniform(), rng.uniform(), rng.uniform()};
    o.cloud.add(snap_to_lattice(random_vec(rng, -0.2, 0.2)), f);
  }
  for (int i = 0; i < t_hist; ++i) o.state_history.push_back(random_state(rng, 0.2));
  for (int i = 0; i < t_act; ++i) o.action_history.push_back(random_state(rng, 0.2));
  return o;
}

ActionChunk random_chunk(Rng& rng, int m, const Vec3& around) {
  ActionChunk a;
  for (int i = 0; i < m; ++i) {
    GripperState s = random_state(rng, 0.05);
    s.position = snap_to_lattice(Vec3(around + s.position));
    a.steps.push_back(s);
  }
  return a;
}

struct PaddingGuard {
  HighLevelNet& net;
  nn::Padding saved;
  PaddingGuard(HighLevelNet& n, nn::Padding p) : net(n), saved(n.config().padding) { net.set_padding(p); }
  ~PaddingGuard() { net.set_padding(saved); }
};

AuditCheck make_check(std::string name, double tolerance) {
  AuditCheck c;
  c.name = std::move(name);
  c.tolerance = tolerance;
  return c;
}

void track(AuditCheck& c, double r) {
  c.residual = std::max(c.residual, std::isnan(r) ? INFINITY : r);
  ++c.compared;
}

bool inside(const PointCloud& cloud, const VoxelGridSpec& spec) {
  for (const Vec3& p : cloud.positions())
    if (!spec.world_to_index(p)) return false;
  return true;
}

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

template <typename T>
VoxelGrid encode_grid_as(const nn::EqPointNet& enc, const PointPartition& part) {
  nn::Graph<T> g;
  const auto& v = g.value(enc.encode_grid(g, part));
  VoxelGrid out(part.spec, enc.output_rep());
  std::transform(v.data.begin(), v.data.end(), out.data().begin(), [](T x) { return static_cast<double>(x); });
  return out;
}

/// Grid-aligned translations by a multiple of the UNet's coarsest stride that
/// keep every scene point inside the grid.
std::vector<Vec3> t3_shifts(const HighLevelConfig& hc) {
  const double step = hc.grid.resolution * (1 << (hc.unet_widths.size() - 1));
  return {Vec3(step, 0, 0), Vec3(-step, 0, 0), Vec3(0, step, 0), Vec3(0, -step, 0), Vec3(0, 0, step),
          Vec3(step, -step, 0)};
}

}  // namespace

bool bit_equal(const Observation& a, const Observation& b) {
  if (a.cloud.size() != b.cloud.size() || a.state_history.size() != b.state_history.size() ||
      a.action_history.size() != b.action_history.size())
    return false;
  const auto& pa = a.cloud.positions();
  const auto& pb = b.cloud.positions();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (std::memcmp(pa[i].data(), pb[i].data(), 3 * sizeof(double)) != 0) return false;
  const auto& fa = a.cloud.feature_data();
  const auto& fb = b.cloud.feature_data();
  if (fa.size() != fb.size() || std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) != 0) return false;
  for (std::size_t i = 0; i < a.state_history.size(); ++i)
    if (!bit_equal(a.state_history[i], b.state_history[i])) return false;
  for (std::size_t i = 0; i < a.action_history.size(); ++i)
    if (!bit_equal(a.action_history[i], b.action_history[i])) return false;
  return true;
}

double chunk_residual(const ActionChunk& a, const ActionChunk& b) {
  if (a.size() != b.size()) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, state_residual(a.steps[i], b.steps[i]));
  return d;
}

bool bit_equal(const ActionChunk& a, const ActionChunk& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bit_equal(a.steps[i], b.steps[i])) return false;
  return true;
}

std::string corrupt_tied_weight(nn::ParamStore& store, const std::string& prefix, std::uint64_t seed,
                                double scale) {
  Rng rng(seed);
  for (auto& p : store.params()) {
    if (p.tying.kind == nn::TyingKind::None || !p.name.starts_with(prefix)) continue;
    std::vector<double> eff = p.effective();
    for (auto& v : eff) v += scale * rng.normal();
    p.tying = nn::Tying{};
    p.value = std::move(eff);
    return p.name;
  }
  throw InvalidArgument("no tied parameter starts with '" + prefix + "'");
}

nn::GradCheckResult check_gradients(Agent& agent, std::uint64_t seed, const nn::GradCheckConfig& cfg) {
  Rng rng(seed);
  const EnvConfig env = agent.cfg.env_config();
  const Observation o = observe(reset(agent.cfg.task, seed, GroupElement::identity(agent.cfg.u), env), env);
  const VoxelGridSpec& spec = agent.high->config().grid;
  const auto target = static_cast<std::size_t>(rng.uniform_int(0, spec.dims[0] * spec.dims[1] * spec.dims[2] - 1));
  const ActionChunk chunk = random_chunk(rng, agent.cfg.m, o.current_state().position);
  const LowBatch batch = make_low_batch(agent.low.cfg, agent.low.sched, {&o}, {&chunk}, rng);
  auto loss = [&](bool with_grad) {
    nn::Graph<double> g;
    const nn::Var l =
        g.sum({g.cross_entropy(agent.high->forward(g, o.cloud), target), loss_low(g, *agent.eps, batch)});
    if (with_grad) {
      g.backward(l);
      g.accumulate_param_grads();
    }
    return g.value(l).data[0];
  };
  const auto r = nn::grad_check(agent.store, loss, rng, cfg);
  agent.store.zero_grad();
  return r;
}

AuditReport run_audit(Agent& agent, const AuditOptions& opt) {
  AuditReport report;
  Rng rng(mix_seed(opt.seed, 0xa0d1));
  const PaddingGuard guard(*agent.high, nn::Padding::Circular);
  const HighLevelNet& high = *agent.high;
  const HighLevelConfig& hc = high.config();
  const VoxelGridSpec& spec = hc.grid;
  const LowLevelPolicy& low = agent.low;
  const ActionCodec codec = low.cfg.codec();
  const int u = agent.cfg.u;
  auto rot = [u](int m) { return GroupElement::rotation(m, u); };

  // group law on points and gripper states
  {
    AuditCheck hom = make_check("group.homomorphism", 1e-12);
    AuditCheck inv = make_check("group.inverse", 1e-12);
    for (int i = 0; i < opt.group_pairs; ++i) {
      const GroupElement g1{random_vec(rng, -1, 1), rng.uniform_int(0, u - 1), u};
      const GroupElement g2{random_vec(rng, -1, 1), rng.uniform_int(0, u - 1), u};
      const Vec3 p = random_vec(rng, -1, 1);
      const GripperState s = random_state(rng, 1.0);
      const GroupElement g21 = compose(g2, g1);
      track(hom, std::max((act_point(g21, p) - act_point(g2, act_point(g1, p))).cwiseAbs().maxCoeff(),
                          state_residual(act_gripper(g21, s), act_gripper(g2, act_gripper(g1, s)))));
      const GroupElement gi = inverse(g1);
      track(inv, std::max((act_point(gi, act_point(g1, p)) - p).cwiseAbs().maxCoeff(),
                          state_residual(act_gripper(gi, act_gripper(g1, s)), s)));
    }
    report.checks.push_back(hom);
    report.checks.push_back(inv);
  }

  // stacked voxels commute with grid-compatible transforms
  {
    nn::ParamStore local;
    std::unique_ptr<nn::EqPointNet> own;
    const nn::EqPointNet* enc = &high.encoder();
    if (!hc.stacked) {
      own = std::make_unique<nn::EqPointNet>(local, "audit.enc", encoder_config(hc), rng);
      enc = own.get();
    }
    AuditCheck f32 = make_check("stacked_voxel.f32", 1e-5);
    AuditCheck f64 = make_check("stacked_voxel.f64", 1e-10);
    const double r = spec.resolution;
    const Vec3 lo = spec.origin + Vec3(2 * r, 2 * r, 2 * r);
    const Vec3 hi = spec.origin + r * Vec3(spec.dims[0] - 2, spec.dims[1] - 2, spec.dims[2] - 2);
    for (int i = 0; i < opt.clouds; ++i) {
      const PointCloud cloud = random_interior_cloud(rng, 400, lo, hi, hc.kf);
      const PointPartition part = partition(cloud, spec);
      const VoxelGrid b32 = encode_grid_as<float>(*enc, part);
      const VoxelGrid b64 = encode_grid_as<double>(*enc, part);
      for (int m = 0; m < u; ++m)
        for (int dz = -2; dz <= 2; ++dz)
          for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
              const GroupElement g{r * Vec3(dx, dy, dz), m, u};
              const PointPartition moved = partition(act_cloud(g, cloud), spec);
              track(f32, grid_residual(encode_grid_as<float>(*enc, moved), act_voxelmap(g, b32)));
              track(f64, grid_residual(encode_grid_as<double>(*enc, moved), act_voxelmap(g, b64)));
            }
    }
    report.checks.push_back(f32);
    report.checks.push_back(f64);
  }

  // scenes shared by the layer and policy checks
  const EnvConfig env = agent.cfg.env_config();
  std::vector<Observation> scenes;
  for (int i = 0; i < opt.scenes; ++i)
    scenes.push_back(observe(reset(agent.cfg.task, mix_seed(opt.seed, 0x5ce4e, i), GroupElement::identity(u), env), env));

  // layers
  {
    AuditCheck encc = make_check("layer.encoder", 1e-6);
    if (hc.stacked) {
      const nn::EqPointNet& enc = high.encoder();
      for (int t = 0; t < 20; ++t) {
        const Vec3 center = spec.index_to_center({rng.uniform_int(0, spec.dims[0] - 1),
                                                  rng.uniform_int(0, spec.dims[1] - 1),
                                                  rng.uniform_int(0, spec.dims[2] - 1)});
        VoxelCell cell;
        for (int k = 0, n = 1 + t % 6; k < n; ++k) {
          cell.positions.push_back(center + random_vec(rng, -spec.resolution / 2, spec.resolution / 2));
          for (int f = 0; f < hc.kf; ++f) cell.features.push_back(rng.uniform());
        }
        const auto base = enc(center, cell);
        for (int m = 0; m < u; ++m) {
          VoxelCell moved = cell;
          for (auto& p : moved.positions) p = center + rotate_vector(rot(m), p - center);
          auto expect = base;
          apply_rep<double>(enc.output_rep(), m, expect);
          const auto got = enc(center, moved);
          double d = 0.0;
          for (std::size_t k = 0; k < got.size(); ++k) d = std::max(d, std::abs(got[k] - expect[k]));
          track(encc, d);
        }
      }
    } else {
      encc.note = "no stacked voxels";
      encc.compared = 1;
    }
    report.checks.push_back(encc);

    AuditCheck unet = make_check("layer.unet", 1e-4);
    const RepSpec in = hc.input_rep();
    for (int t = 0; t < 2; ++t) {
      VoxelGrid x(spec, in);
      for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
      auto run = [&](const VoxelGrid& v) {
        nn::Graph<double> g;
        nn::Tensor<double> tx({in.dim(), spec.dims[2], spec.dims[1], spec.dims[0]});
        tx.data = v.data();
        VoxelGrid y(spec, RepSpec::trivial(1, u));
        y.data() = g.value(high.unet().forward(g, g.constant(std::move(tx)))).data;
        return y;
      };
      const VoxelGrid base = run(x);
      for (int m = 1; m < u; ++m) track(unet, grid_residual(run(act_voxelmap(rot(m), x)), act_voxelmap(rot(m), base)));
    }
    report.checks.push_back(unet);

    AuditCheck epsc = make_check("layer.eps", 1e-6);
    const RepSpec rep = codec.rep();
    for (std::size_t i = 0; i < std::min<std::size_t>(3, scenes.size()); ++i) {
      const Vec3 t = scenes[i].current_state().position;
      const Observation o_star = low.cfg.frame_transfer ? frame_transfer_obs(scenes[i], t) : scenes[i];
      const Vec3 cond = low.cfg.frame_transfer ? Vec3::Zero() : t;
      const auto bound = low.eps->bind(o_star, cond);
      std::vector<double> a(static_cast<std::size_t>(codec.dim()));
      for (auto& v : a) v = rng.normal();
      const int k = rng.uniform_int(1, low.cfg.K);
      const auto base = bound(a, k);
      for (int m = 1; m < u; ++m) {
        const auto bg = low.eps->bind(act_observation(rot(m), o_star), rotate_vector(rot(m), cond));
        auto ag = a;
        apply_rep<double>(rep, m, ag);
        auto expect = base;
        apply_rep<double>(rep, m, expect);
        const auto got = bg(ag, k);
        double d = 0.0;
        for (std::size_t j = 0; j < got.size(); ++j) d = std::max(d, std::abs(got[j] - expect[j]));
        track(epsc, d);
      }
    }
    report.checks.push_back(epsc);
  }

  // high level and the C_u chain
  {
    AuditCheck heat = make_check("high.heatmap", 1e-4);
    AuditCheck amax = make_check("high.argmax", 0.0);
    AuditCheck pil = make_check("low.pi_low", 1e-4);
    AuditCheck pif = make_check("policy.pi", 1e-4);
    int skipped = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const Observation& o = scenes[i];
      const VoxelGrid hm = high_forward(high, o);
      const double margin = argmax_margin(hm);
      const Vec3 t_high = select_keypose(hm);
      Rng nr(mix_seed(opt.seed, 0x4015e, i));
      const SampleNoise noise = draw_noise(codec.dim(), low.cfg.K, nr);
      const ActionChunk lbase = pi_low(low, o, t_high, noise);
      const PolicyOutput pbase = pi_full(high, low, o, noise);
      if (margin <= opt.argmax_margin) ++skipped;
      for (int m = 1; m < u; ++m) {
        const GroupElement g = rot(m);
        const Observation og = act_observation(g, o);
        const SampleNoise ng = transform_noise(noise, codec.rep(), m);
        const VoxelGrid hg = high_forward(high, og);
        track(heat, grid_residual(hg, act_voxelmap(g, hm)));
        track(pil, chunk_residual(pi_low(low, og, act_point(g, t_high), ng), act_chunk(g, lbase)));
        if (margin <= opt.argmax_margin) continue;
        track(amax, (select_keypose(hg) - act_point(g, t_high)).cwiseAbs().maxCoeff());
        const PolicyOutput pg = pi_full(high, low, og, ng);
        track(pif, std::max((pg.keypose - act_point(g, pbase.keypose)).cwiseAbs().maxCoeff(),
                            chunk_residual(pg.chunk, act_chunk(g, pbase.chunk))));
      }
    }
    if (skipped) amax.note = pif.note = std::to_string(skipped) + " scenes below the argmax margin";
    for (auto* c : {&heat, &amax, &pil, &pif}) report.checks.push_back(*c);
  }

  // T(3): frame transfer laws and bit-exact translation of the policy
  {
    AuditCheck ft = make_check("t3.frame_transfer", 0.0);
    for (int i = 0; i < opt.frame_inputs; ++i) {
      const Observation o = random_observation(rng, 10, agent.cfg.t_hist, agent.cfg.t_act);
      const Vec3 t = snap_to_lattice(random_vec(rng, -0.2, 0.2));
      const Vec3 t_high = snap_to_lattice(random_vec(rng, -0.2, 0.2));
      const ActionChunk a = random_chunk(rng, 4, Vec3::Zero());
      const bool ok = bit_equal(frame_transfer_obs(o, Vec3::Zero()), o) &&
                      bit_equal(frame_transfer_obs(frame_transfer_obs(o, t), -t), o) &&
                      bit_equal(frame_transfer_obs(act_observation(GroupElement::translation(t, u), o), t_high + t),
                                frame_transfer_obs(o, t_high)) &&
                      bit_equal(frame_transfer_action(frame_transfer_action(a, t), -t), a);
      track(ft, ok ? 0.0 : 1.0);
    }
    report.checks.push_back(ft);

    const TranslationSensitiveStub stub;
    const LowLevelPolicy stub_low{&stub, low.cfg, low.sched};
    AuditCheck lstub = make_check("t3.pi_low_stub", 0.0);
    AuditCheck pstub = make_check("t3.pi_stub", 0.0);
    AuditCheck pt3 = make_check("t3.pi", 0.0);
    const auto shifts = t3_shifts(hc);
    int skipped = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const Observation& o = scenes[i];
      Rng nr(mix_seed(opt.seed, 0x7e3, i));
      const SampleNoise noise = draw_noise(codec.dim(), low.cfg.K, nr);
      const Vec3 t_high = snap_to_lattice(o.current_state().position);
      const ActionChunk a = pi_low(stub_low, o, t_high, noise);
      const PolicyOutput ps = pi_full(high, stub_low, o, noise);
      const PolicyOutput pa = pi_full(high, low, o, noise);
      for (const Vec3& d : shifts) {
        const Observation od = act_observation(GroupElement::translation(d, u), o);
        const ActionChunk b = pi_low(stub_low, od, t_high + d, noise);
        track(lstub, bit_equal(b, frame_transfer_action(a, -d)) ? 0.0 : std::max(chunk_residual(b, frame_transfer_action(a, -d)), 1e-300));
        if (!inside(o.cloud, spec) || !inside(od.cloud, spec) || ps.margin <= opt.argmax_margin) {
          ++skipped;
          continue;
        }
        for (auto [check, base, policy] : {std::tuple{&pstub, &ps, &stub_low}, std::tuple{&pt3, &pa, &low}}) {
          const PolicyOutput moved = pi_full(high, *policy, od, noise);
          const ActionChunk expect = frame_transfer_action(base->chunk, -d);
          const bool exact = moved.keypose == base->keypose + d && bit_equal(moved.chunk, expect);
          track(*check, exact ? 0.0
                              : std::max({(moved.keypose - base->keypose - d).cwiseAbs().maxCoeff(),
                                          chunk_residual(moved.chunk, expect), 1e-300}));
        }
      }
    }
    if (skipped) pstub.note = pt3.note = std::to_string(skipped) + " cases outside the grid or below the margin";
    for (auto* c : {&lstub, &pstub, &pt3}) report.checks.push_back(*c);
  }

  if (opt.gradients) {
    AuditCheck gc = make_check("grad.check", 1e-4);
    nn::GradCheckConfig gcfg;
    gcfg.samples = opt.grad_samples;
    const auto r = check_gradients(agent, mix_seed(opt.seed, 0x9c), gcfg);
    gc.residual = r.ok() ? r.max_rel_error : std::max(r.max_rel_error, 2 * gcfg.tolerance);
    gc.compared = r.checked;
    gc.note = std::to_string(r.passed) + "/" + std::to_string(r.checked) + " passed, worst " + r.worst;
    report.checks.push_back(gc);
  }
  return report;
}

}  // namespace hep
