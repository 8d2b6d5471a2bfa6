#include "hep/env.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "hep/error.hpp"

namespace hep {

namespace {

constexpr double kRes = 0x1.0p-5;         // voxel pitch of the default grid
constexpr double kHalf = 3 * 0x1.0p-7;    // cube half size, 1.5 voxels wide
constexpr double kFine = 0x1.0p-10;       // surface sample pitch
constexpr double kCubeZ = 1.5 * kRes;     // cube centers sit on voxel centers
constexpr double kHomeZ = 6.5 * kRes;
constexpr double kLift = 5.0 * kRes;
constexpr double kMinSeparation = 0.06;

const Vec3 kRed(0.9, 0.1, 0.1);
const Vec3 kGreen(0.1, 0.9, 0.1);
const Vec3 kBlue(0.1, 0.1, 0.9);

/// Coordinates of voxel centers within +-0.08 (or +-0.05 when inner) of the axis.
double layout_coord(Rng& rng, bool inner = false) {
  return (rng.uniform_int(inner ? -2 : -3, inner ? 1 : 2) + 0.5) * kRes;
}

/// In-face offsets are odd multiples of kFine / 2 and the faces sit 1.5 voxels
/// apart, so no sample of an object centered on a voxel center lies on a
/// voxel boundary.
double face_coord(Rng& rng) { return (rng.uniform_int(0, 47) + 0.5) * kFine - 24.0 * kFine; }

SceneObject make_cube(const Vec3& center, const Vec3& color, int per_face, Rng& rng) {
  SceneObject o;
  o.kind = SceneObject::Kind::Cube;
  o.center = center;
  o.color = color;
  for (int axis = 0; axis < 3; ++axis)
    for (double sign : {-1.0, 1.0})
      for (int i = 0; i < per_face; ++i) {
        Vec3 p;
        p[axis] = sign * kHalf;
        p[(axis + 1) % 3] = face_coord(rng);
        p[(axis + 2) % 3] = face_coord(rng);
        o.offsets.push_back(p);
      }
  return o;
}

SceneObject make_pad(const Vec3& center, int per_face, Rng& rng) {
  SceneObject o;
  o.kind = SceneObject::Kind::Pad;
  o.center = center;
  o.color = kBlue;
  for (int i = 0; i < per_face; ++i) o.offsets.emplace_back(face_coord(rng), face_coord(rng), 0.0);
  return o;
}

const std::vector<Vec3>& gripper_offsets() {
  static const std::vector<Vec3> pts = {
      {11 * kFine, 0.0, -11 * kFine}, {-11 * kFine, 0.0, -11 * kFine}, {11 * kFine, 0.0, 5 * kFine},
      {-11 * kFine, 0.0, 5 * kFine},  {0.0, 0.0, 21 * kFine},
  };
  return pts;
}

Vec3 xy(const Vec3& p) { return {p.x(), p.y(), 0.0}; }

double planar_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y();
  return std::sqrt(dx * dx + dy * dy);
}

bool inside(const VoxelGridSpec& ws, const Vec3& p) { return ws.world_to_index(p).has_value(); }

Vec3 clamp_to(const VoxelGridSpec& ws, const Vec3& p, bool& clamped) {
  Vec3 r = p;
  for (int a = 0; a < 3; ++a) {
    const double lo = ws.origin[a] + kPositionQuantum;
    const double hi = ws.origin[a] + ws.dims[a] * ws.resolution - kPositionQuantum;
    const double v = std::clamp(p[a], lo, hi);
    if (v != p[a]) clamped = true;
    r[a] = v;
  }
  return r;
}

}  // namespace

std::string to_string(TaskId id) {
  switch (id) {
    case TaskId::Reach: return "reach";
    case TaskId::PickLift: return "pick-lift";
    case TaskId::PushSlide: return "push-slide";
    case TaskId::TwoStagePlace: return "two-stage-place";
  }
  return "?";
}

TaskId task_from_string(const std::string& s) {
  for (TaskId t : {TaskId::Reach, TaskId::PickLift, TaskId::PushSlide, TaskId::TwoStagePlace})
    if (to_string(t) == s) return t;
  throw InvalidArgument("unknown task '" + s + "' (expected reach|pick-lift|push-slide|two-stage-place)");
}

TaskSpec TaskSpec::make(TaskId id) {
  switch (id) {
    case TaskId::Reach: return {id, 2, 45, 0.02};
    case TaskId::PickLift: return {id, 3, 63, 0.1};
    case TaskId::PushSlide: return {id, 3, 72, 0.03};
    case TaskId::TwoStagePlace: return {id, 3, 63, 0.03};
  }
  throw InvalidArgument("unknown task");
}

Vec3 Scene::goal() const {
  const auto& t = objects.at(static_cast<std::size_t>(target));
  if (t.kind == SceneObject::Kind::Pad) return {t.center.x(), t.center.y(), table_z + half};
  return t.center;
}

// --- scene ------------------------------------------------------------------

Scene act_scene(const GroupElement& g, const Scene& s) {
  Scene r = s;
  const Mat3 R = rotation3(g);
  for (auto& o : r.objects) {
    o.center = act_point(g, o.center);
    o.q = R * o.q;
  }
  r.table_z = s.table_z + g.t.z();
  r.gripper = act_gripper(g, s.gripper);
  r.held_offset = rotate_vector(g, s.held_offset);
  for (auto& st : r.states) st = act_gripper(g, st);
  for (auto& c : r.commands) c = act_gripper(g, c);
  r.g_scene = compose(g, s.g_scene);
  return r;
}

Observation observe(const Scene& s, const EnvConfig& cfg) {
  Observation o;
  o.cloud = PointCloud(3);
  std::size_t n = gripper_offsets().size();
  for (const auto& obj : s.objects) n += obj.offsets.size();
  o.cloud.reserve(n);
  for (const auto& obj : s.objects) {
    const std::array<double, 3> f{obj.color.x(), obj.color.y(), obj.color.z()};
    for (const auto& off : obj.offsets) o.cloud.add(snap_to_lattice(Vec3(obj.center + obj.q * off)), f);
  }
  const double shade = 0.2 + 0.6 * s.gripper.c;
  const std::array<double, 3> gf{shade, shade, 0.2};
  for (const auto& off : gripper_offsets())
    o.cloud.add(snap_to_lattice(Vec3(s.gripper.position + s.gripper.q * off)), gf);

  auto last = [](const std::vector<GripperState>& v, int n, const GripperState& pad) {
    std::vector<GripperState> out;
    for (int i = n; i >= 1; --i) {
      const int idx = static_cast<int>(v.size()) - i;
      out.push_back(idx >= 0 ? v[static_cast<std::size_t>(idx)] : (v.empty() ? pad : v.front()));
    }
    return out;
  };
  o.state_history = last(s.states, cfg.t_hist, s.gripper);
  o.action_history = last(s.commands, cfg.t_act, s.states.empty() ? s.gripper : s.states.front());
  return o;
}

Scene reset(TaskId task, std::uint64_t seed, const GroupElement& g_scene, const EnvConfig& cfg) {
  cfg.workspace.validate();
  if (!g_scene.is_quarter_turn()) throw InexactTransform("reset: scene rotations must be quarter turns");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(task) + 1));
  Scene s;
  s.task = task;
  s.seed = seed;
  s.g_scene = GroupElement::identity(g_scene.u);
  s.half = kHalf;
  s.table_z = kCubeZ - kHalf;

  auto sample_xy = [&](bool inner) { return Vec3(layout_coord(rng, inner), layout_coord(rng, inner), kCubeZ); };
  const Vec3 home(layout_coord(rng), layout_coord(rng), kHomeZ);
  // Pushed cubes stay near the middle so the pre-push pose fits the workspace.
  const Vec3 a = sample_xy(task == TaskId::PushSlide);
  Vec3 b = sample_xy(false);
  while (planar_distance(a, b) < kMinSeparation) b = sample_xy(false);

  switch (task) {
    case TaskId::Reach:
      s.objects.push_back(make_cube(a, kGreen, cfg.points_per_face, rng));
      s.target = 0;
      break;
    case TaskId::PickLift:
      s.objects.push_back(make_cube(a, kRed, cfg.points_per_face, rng));
      s.object = 0;
      break;
    case TaskId::PushSlide:
    case TaskId::TwoStagePlace:
      s.objects.push_back(make_cube(a, kRed, cfg.points_per_face, rng));
      s.objects.push_back(make_pad(Vec3(b.x(), b.y(), s.table_z), cfg.points_per_face, rng));
      s.object = 0;
      s.target = 1;
      break;
  }
  s.gripper.position = home;
  s.states = {s.gripper};

  s = act_scene(g_scene, s);
  const Observation o = observe(s, cfg);
  for (const auto& p : o.cloud.positions())
    if (!inside(cfg.workspace, p)) {
      std::ostringstream os;
      os << "reset: scene transform (m=" << g_scene.m << ", t=" << g_scene.t.transpose()
         << ") pushes the scene out of the workspace";
      throw InvalidArgument(os.str());
    }
  return s;
}

StepResult step(Scene& s, const GripperState& command, const EnvConfig& cfg) {
  validate(command, 1e-6);
  GripperState c = command;
  bool clamped = false;
  c.position = snap_to_lattice(clamp_to(cfg.workspace, command.position, clamped));
  if (clamped) ++s.clamped;

  const GripperState prev = s.gripper;
  const bool was_open = prev.c >= 0.5, is_open = c.c >= 0.5;
  s.gripper = c;

  if (s.held >= 0) {
    s.objects[static_cast<std::size_t>(s.held)].center = snap_to_lattice(Vec3(c.position + s.held_offset));
  } else if (!was_open) {
    // A closed gripper sliding along the table pushes cubes ahead of it.
    const Vec3 d = xy(c.position - prev.position);
    const double len = std::sqrt(d.x() * d.x() + d.y() * d.y());
    if (len > 0.0) {
      const Vec3 dir = d / len;
      for (auto& o : s.objects) {
        if (o.kind != SceneObject::Kind::Cube) continue;
        const Vec3 rel = xy(o.center - c.position);
        const double along = rel.x() * dir.x() + rel.y() * dir.y();
        const Vec3 lat = rel - along * dir;
        if (std::abs(o.center.z() - c.position.z()) < s.half && along > 0.0 && along < cfg.push_distance &&
            std::sqrt(lat.x() * lat.x() + lat.y() * lat.y()) < s.half) {
          const Vec3 p = xy(c.position) + cfg.push_distance * dir;
          o.center = snap_to_lattice(Vec3(p.x(), p.y(), o.center.z()));
        }
      }
    }
  }

  if (was_open && !is_open && s.held < 0) {
    double best = cfg.grasp_radius;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const auto& o = s.objects[i];
      if (o.kind != SceneObject::Kind::Cube) continue;
      const double dist = (o.center - c.position).norm();
      if (dist < best) {
        best = dist;
        s.held = static_cast<int>(i);
      }
    }
    if (s.held >= 0) s.held_offset = s.objects[static_cast<std::size_t>(s.held)].center - c.position;
  } else if (!was_open && is_open && s.held >= 0) {
    auto& o = s.objects[static_cast<std::size_t>(s.held)];
    o.center.z() = s.table_z + s.half;
    s.held = -1;
    s.held_offset = Vec3::Zero();
  }

  s.states.push_back(c);
  s.commands.push_back(c);
  ++s.tick;
  StepResult r;
  r.obs = observe(s, cfg);
  r.done = s.tick >= TaskSpec::make(s.task).max_ticks;
  return r;
}

bool task_success(const Scene& s, const TaskSpec& spec) {
  switch (spec.id) {
    case TaskId::Reach:
      return (s.gripper.position - s.goal()).norm() <= spec.tolerance;
    case TaskId::PickLift: {
      const auto& o = s.objects[static_cast<std::size_t>(s.object)];
      return o.center.z() - (s.table_z + s.half) >= spec.tolerance;
    }
    case TaskId::PushSlide:
    case TaskId::TwoStagePlace: {
      const auto& o = s.objects[static_cast<std::size_t>(s.object)];
      const bool on_table = std::abs(o.center.z() - (s.table_z + s.half)) < 1e-9;
      return s.held < 0 && on_table && planar_distance(o.center, s.goal()) <= spec.tolerance;
    }
  }
  return false;
}

// --- expert -----------------------------------------------------------------

namespace {

struct Planner {
  Scene sim;
  const EnvConfig& cfg;
  std::vector<GripperState> cmds;
  std::vector<ExpertPhase> phases;

  void issue(const GripperState& c) {
    cmds.push_back(c);
    step(sim, c, cfg);
  }
  void dwell(int n) {
    for (int i = 0; i < n; ++i) issue(sim.gripper);
  }
  /// Straight line at most max_speed per tick, positions on the lattice;
  /// the aperture changes on the arrival tick.
  void move(const Vec3& w, double c_end, const std::string& phase) {
    const Vec3 p0 = sim.gripper.position;
    const Vec3 d = w - p0;
    const double len = d.norm();
    if (len == 0.0 && sim.gripper.c == c_end) return;
    const int n = std::max(1, static_cast<int>(std::ceil(len / cfg.max_speed)));
    for (int k = 1; k <= n; ++k) {
      GripperState c = sim.gripper;
      c.position = k == n ? w : Vec3(p0 + snap_to_lattice(Vec3(d * k / n)));
      if (k == n) c.c = c_end;
      issue(c);
    }
    if (!phase.empty()) phases.push_back({phase, cmds.size()});
  }
};

void plan_task(Planner& p) {
  Scene& s = p.sim;
  const int dwell = p.cfg.dwell_ticks;
  auto cube = [&]() -> SceneObject& { return s.objects[static_cast<std::size_t>(s.object)]; };
  switch (s.task) {
    case TaskId::Reach:
      p.move(s.goal(), s.gripper.c, "arrive");
      p.dwell(dwell);
      break;
    case TaskId::PickLift:
      if (s.held < 0) {
        p.move(cube().center, 0.0, "grasp");
        p.dwell(dwell);
      }
      if (s.held >= 0) {
        const double apex = s.table_z + s.half + kLift;
        if (s.gripper.position.z() + s.held_offset.z() < apex - 1e-12) {
          Vec3 w = s.gripper.position;
          w.z() = apex - s.held_offset.z();
          p.move(w, 0.0, "apex");
        }
        p.dwell(dwell);
      }
      break;
    case TaskId::TwoStagePlace:
      if (task_success(s, TaskSpec::make(s.task))) {
        p.dwell(dwell);
        break;
      }
      if (s.held < 0) {
        if (s.gripper.c < 0.5) p.issue({s.gripper.position, s.gripper.q, 1.0});
        p.move(cube().center, 0.0, "grasp");
        p.dwell(dwell);
      }
      if (s.held >= 0) {
        p.move(s.goal() - s.held_offset, 1.0, "release");
        p.dwell(dwell);
      }
      break;
    case TaskId::PushSlide: {
      if (task_success(s, TaskSpec::make(s.task))) {
        p.dwell(dwell);
        break;
      }
      if (s.held >= 0 || s.gripper.c < 0.5) p.issue({s.gripper.position, s.gripper.q, 1.0});
      const Vec3 goal = s.goal();
      const Vec3 d = xy(goal - cube().center);
      const Vec3 dir = d / std::sqrt(d.x() * d.x() + d.y() * d.y());
      const Vec3 pre = snap_to_lattice(Vec3(cube().center - p.cfg.push_distance * dir));
      p.move(pre, 0.0, "contact");
      p.dwell(dwell);
      const Vec3 end = snap_to_lattice(Vec3(goal.x() - p.cfg.push_distance * dir.x(),
                                            goal.y() - p.cfg.push_distance * dir.y(), pre.z()));
      p.move(end, 1.0, "release");
      p.dwell(dwell);
      break;
    }
  }
}

}  // namespace

std::vector<GripperState> expert_plan(const Scene& scene, const EnvConfig& cfg, bool leading_dwell) {
  Planner p{scene, cfg, {}, {}};
  if (leading_dwell) p.dwell(cfg.dwell_ticks);
  plan_task(p);
  return p.cmds;
}

ExpertDemo expert_policy(const Scene& scene, const EnvConfig& cfg) {
  Planner p{scene, cfg, {}, {}};
  p.dwell(cfg.dwell_ticks);
  plan_task(p);
  if (!task_success(p.sim, TaskSpec::make(scene.task)))
    throw InvalidArgument("expert_policy: scene with seed " + std::to_string(scene.seed) + " is not solvable");

  ExpertDemo out;
  out.phases = p.phases;
  out.demo.task_id = to_string(scene.task);
  out.demo.seed = scene.seed;
  out.demo.scene_transform = scene.g_scene;
  Scene replay = scene;
  for (std::size_t i = 0; i <= p.cmds.size(); ++i) {
    DemoFrame f;
    f.tick = static_cast<std::int64_t>(i);
    f.obs = observe(replay, cfg);
    f.executed = i < p.cmds.size() ? p.cmds[i] : replay.gripper;
    out.demo.frames.push_back(std::move(f));
    if (i < p.cmds.size()) step(replay, p.cmds[i], cfg);
  }
  out.final_scene = replay;
  return out;
}

// --- policies and rollouts --------------------------------------------------

ActionChunk ExpertAsPolicy::act(const Scene& scene, const Observation&, Rng&) {
  const auto plan = expert_plan(scene, cfg_);
  ActionChunk a;
  for (int i = 0; i < m_; ++i)
    a.steps.push_back(plan.empty() ? scene.gripper : plan[std::min<std::size_t>(static_cast<std::size_t>(i), plan.size() - 1)]);
  return a;
}

ActionChunk RandomPolicy::act(const Scene& scene, const Observation&, Rng& rng) {
  const auto& ws = cfg_.workspace;
  ActionChunk a;
  for (int i = 0; i < m_; ++i) {
    GripperState s = scene.gripper;
    for (int k = 0; k < 3; ++k)
      s.position[k] = snap_to_lattice(rng.uniform(ws.origin[k], ws.origin[k] + ws.dims[k] * ws.resolution));
    s.c = rng.uniform() < 0.5 ? 0.0 : 1.0;
    a.steps.push_back(s);
  }
  return a;
}

RolloutResult rollout(Policy& policy, const TaskSpec& task, Scene scene, ControlMode mode, Rng& rng,
                      const EnvConfig& cfg, int replan) {
  if (replan < 1) throw InvalidArgument("rollout: replan interval must be >= 1");
  RolloutResult r;
  Observation obs = observe(scene, cfg);
  auto run = [&](const ActionChunk& chunk, int n) {
    if (chunk.steps.empty()) throw InvalidArgument("policy returned an empty chunk");
    for (int i = 0; i < n && i < static_cast<int>(chunk.size()); ++i) {
      obs = step(scene, chunk.steps[i], cfg).obs;
      r.trace.push_back(scene.gripper);
      ++r.steps;
    }
  };
  try {
    if (mode == ControlMode::Open) {
      for (int seg = 0; seg < task.segments; ++seg) {
        const ActionChunk chunk = policy.act(scene, obs, rng);
        run(chunk, static_cast<int>(chunk.size()));
      }
    } else {
      while (r.steps < task.max_ticks) run(policy.act(scene, obs, rng), std::min(replan, task.max_ticks - r.steps));
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.success = r.error.empty() && task_success(scene, task);
  r.final_scene = std::move(scene);
  return r;
}

// --- evaluation -------------------------------------------------------------

GroupElement TransformSet::sample(Rng& rng) const {
  if (rotations.empty() || translations.empty()) throw InvalidArgument("transform set is empty");
  GroupElement g;
  g.u = u;
  g.m = rotations[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(rotations.size()) - 1))];
  g.t = translations[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(translations.size()) - 1))];
  return g;
}

std::vector<Vec3> TransformSet::grid(int n, double step, bool include_center) {
  std::vector<Vec3> out;
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j)
      if (include_center || i != 0 || j != 0) out.emplace_back(i * step, j * step, 0.0);
  return out;
}

double EvalReport::rate() const {
  if (rows.empty()) return 0.0;
  int s = 0;
  for (const auto& r : rows) s += r.success;
  return static_cast<double>(s) / rows.size();
}

std::pair<double, double> EvalReport::interval() const {
  const double n = static_cast<double>(rows.size());
  if (n == 0) return {0.0, 1.0};
  const double z = 1.959963984540054, p = rate();
  const double den = 1.0 + z * z / n;
  const double mid = (p + z * z / (2 * n)) / den;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den;
  return {std::max(0.0, mid - half), std::min(1.0, mid + half)};
}

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string EvalReport::csv() const {
  std::string out = std::string(kEvalCsvHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.episode) + "," + std::to_string(r.seed) + "," + std::to_string(r.transform.m) + "," +
           num(r.transform.t.x()) + "," + num(r.transform.t.y()) + "," + num(r.transform.t.z()) + "," +
           (r.success ? "1" : "0") + "," + std::to_string(r.steps) + "\n";
  return out;
}

EvalReport evaluate(Policy& policy, TaskId task, const EvalOptions& opt, const EnvConfig& cfg) {
  EvalReport rep;
  const TaskSpec spec = TaskSpec::make(task);
  for (int i = 0; i < opt.episodes; ++i) {
    EpisodeRow row;
    row.episode = i;
    row.seed = opt.fixed_seed ? opt.seed_offset : opt.seed_offset + static_cast<std::uint64_t>(i);
    if (!opt.fixed_transforms.empty()) {
      row.transform = opt.fixed_transforms[static_cast<std::size_t>(i) % opt.fixed_transforms.size()];
    } else {
      Rng trng(mix_seed(opt.transform_seed, static_cast<std::uint64_t>(i)));
      row.transform = opt.transforms.sample(trng);
    }
    const Scene scene = reset(task, row.seed, row.transform, cfg);
    Rng prng(mix_seed(opt.policy_seed, static_cast<std::uint64_t>(i)));
    const RolloutResult r = rollout(policy, spec, scene, opt.mode, prng, cfg);
    row.success = r.success;
    row.steps = r.steps;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace hep
