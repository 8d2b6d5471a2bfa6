#include "hep/scene.hpp"

#include <Eigen/Geometry>
#include <algorithm>

#include "hep/error.hpp"

namespace hep {

void validate(const Demonstration& demo) {
  if (demo.frames.size() < 2) throw InvalidArgument("demonstration needs at least 2 frames");
  for (std::size_t i = 0; i < demo.frames.size(); ++i) {
    if (demo.frames[i].obs.state_history.empty())
      throw InvalidArgument("demonstration frame without gripper state");
    if (i > 0 && demo.frames[i].tick <= demo.frames[i - 1].tick)
      throw InvalidArgument("demonstration ticks are not strictly increasing");
  }
}

std::vector<std::size_t> extract_keyframes(const Demonstration& demo, const KeyframeConfig& cfg) {
  validate(demo);
  const std::size_t n = demo.frames.size();
  std::vector<bool> key(n, false);

  for (std::size_t i = 1; i < n; ++i) {
    const bool was_open = demo.state(i - 1).c >= cfg.aperture_threshold;
    const bool is_open = demo.state(i).c >= cfg.aperture_threshold;
    if (was_open != is_open) key[i] = true;
  }

  // slow[i]: the step from frame i to i+1 is below the dwell speed.
  std::vector<bool> slow(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i)
    slow[i] = (demo.state(i + 1).position - demo.state(i).position).norm() < cfg.dwell_speed;
  for (std::size_t i = 0; i + 1 < n;) {
    if (!slow[i]) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end + 1 < n && slow[end]) ++end;
    if (static_cast<int>(end - i) >= cfg.dwell_ticks) key[i] = true;
    i = end;
  }
  key[n - 1] = true;

  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (key[i]) out.push_back(i);
  return out;
}

ActionChunk interpolate_segment(const GripperState& s_a, const GripperState& s_b, int m) {
  if (m < 1) throw InvalidArgument("interpolate_segment: m must be >= 1");
  const Eigen::AngleAxisd rel(s_a.q.transpose() * s_b.q);
  ActionChunk chunk;
  chunk.steps.reserve(static_cast<std::size_t>(m));
  for (int i = 1; i < m; ++i) {
    const double f = static_cast<double>(i) / m;
    GripperState s;
    s.position = s_a.position + f * (s_b.position - s_a.position);
    s.q = s_a.q * Eigen::AngleAxisd(f * rel.angle(), rel.axis()).toRotationMatrix();
    s.c = s_a.c;
    chunk.steps.push_back(s);
  }
  chunk.steps.push_back(s_b);
  return chunk;
}

std::string to_string(ControlMode mode) { return mode == ControlMode::Open ? "open" : "closed"; }

ControlMode control_mode_from_string(const std::string& s) {
  if (s == "open") return ControlMode::Open;
  if (s == "closed") return ControlMode::Closed;
  throw InvalidArgument("unknown control mode '" + s + "' (expected open|closed)");
}

std::vector<TrainingPair> make_training_pairs(const Demonstration& demo, ControlMode mode, int m,
                                              const std::vector<std::size_t>& keyframes) {
  validate(demo);
  if (m < 1) throw InvalidArgument("make_training_pairs: horizon must be >= 1");
  if (keyframes.size() < 2) throw InvalidArgument("make_training_pairs: need at least 2 keyframes");
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    if (keyframes[i] >= demo.frames.size() || (i > 0 && keyframes[i] <= keyframes[i - 1]))
      throw InvalidArgument("make_training_pairs: keyframes must be strictly increasing frame indices");
  }

  std::vector<TrainingPair> pairs;
  if (mode == ControlMode::Open) {
    for (std::size_t i = 0; i + 1 < keyframes.size(); ++i) {
      const std::size_t a = keyframes[i], b = keyframes[i + 1];
      TrainingPair p;
      p.obs = demo.frames[a].obs;
      p.target_chunk = interpolate_segment(demo.state(a), demo.state(b), m);
      p.target_keypose = demo.state(b).position;
      pairs.push_back(std::move(p));
    }
    return pairs;
  }

  const std::size_t n = demo.frames.size();
  for (std::size_t t = 0; t + 1 < n; ++t) {
    TrainingPair p;
    p.obs = demo.frames[t].obs;
    for (int j = 0; j < m; ++j) {
      const std::size_t idx = std::min(t + static_cast<std::size_t>(j), n - 1);
      p.target_chunk.steps.push_back(demo.frames[idx].executed);
    }
    const auto next = std::upper_bound(keyframes.begin(), keyframes.end(), t);
    const std::size_t k = next == keyframes.end() ? keyframes.back() : *next;
    p.target_keypose = demo.state(k).position;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

Demonstration act_demonstration(const GroupElement& g, const Demonstration& demo) {
  Demonstration out;
  out.task_id = demo.task_id;
  out.seed = demo.seed;
  out.scene_transform = compose(g, demo.scene_transform);
  out.frames.reserve(demo.frames.size());
  for (const auto& f : demo.frames)
    out.frames.push_back({f.tick, act_observation(g, f.obs), act_gripper(g, f.executed)});
  return out;
}

TrainingPair act_pair(const GroupElement& g, const TrainingPair& pair) {
  return {act_observation(g, pair.obs), act_chunk(g, pair.target_chunk),
          act_point(g, pair.target_keypose)};
}

}  // namespace hep
