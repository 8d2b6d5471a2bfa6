#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hep/group.hpp"
#include "hep/types.hpp"

namespace hep {

struct DemoFrame {
  std::int64_t tick = 0;
  Observation obs;
  GripperState executed;  // command issued at this tick

  bool operator==(const DemoFrame&) const = default;
};

struct Demonstration {
  std::string task_id;
  std::uint64_t seed = 0;
  GroupElement scene_transform;
  std::vector<DemoFrame> frames;

  const GripperState& state(std::size_t i) const { return frames[i].obs.current_state(); }
  bool operator==(const Demonstration&) const = default;
};

/// Throws InvalidArgument unless there are >= 2 frames with strictly
/// increasing ticks and non-empty state histories.
void validate(const Demonstration& demo);

/// Supervision for both levels: the low level imitates target_chunk, the high
/// level is trained toward target_keypose.
struct TrainingPair {
  Observation obs;
  ActionChunk target_chunk;
  Vec3 target_keypose = Vec3::Zero();

  bool operator==(const TrainingPair&) const = default;
};

struct KeyframeConfig {
  double aperture_threshold = 0.5;
  double dwell_speed = 1e-3;  // m per tick
  int dwell_ticks = 4;
};

/// Frames where the aperture crosses the threshold, frames that start a run
/// of at least dwell_ticks slow steps, and always the final frame. Strictly
/// increasing.
std::vector<std::size_t> extract_keyframes(const Demonstration& demo,
                                           const KeyframeConfig& cfg = {});

/// m steps from s_a (exclusive) to s_b (inclusive): linear positions,
/// constant-angular-velocity orientations, aperture of s_a until the last
/// step. The last step equals s_b exactly.
ActionChunk interpolate_segment(const GripperState& s_a, const GripperState& s_b, int m);

enum class ControlMode { Open, Closed };

std::string to_string(ControlMode mode);
ControlMode control_mode_from_string(const std::string& s);

/// Open: one pair per consecutive keyframe pair (interpolated chunk, next
/// keyframe position). Closed: one pair per tick except the last (next m
/// executed commands padded with the final one, position of the next keyframe).
std::vector<TrainingPair> make_training_pairs(const Demonstration& demo, ControlMode mode, int m,
                                              const std::vector<std::size_t>& keyframes);

Demonstration act_demonstration(const GroupElement& g, const Demonstration& demo);
TrainingPair act_pair(const GroupElement& g, const TrainingPair& pair);

}  // namespace hep
