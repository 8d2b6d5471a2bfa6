#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hep/group.hpp"
#include "hep/rng.hpp"
#include "hep/scene.hpp"
#include "hep/voxel_grid.hpp"

namespace hep {

enum class TaskId { Reach, PickLift, PushSlide, TwoStagePlace };

std::string to_string(TaskId id);
TaskId task_from_string(const std::string& s);

struct TaskSpec {
  TaskId id = TaskId::Reach;
  int segments = 2;     // open-loop predictions per episode (keyframes - 1)
  int max_ticks = 45;   // closed-loop episode length
  double tolerance = 0.02;

  static TaskSpec make(TaskId id);
};

struct EnvConfig {
  /// Workspace bounds; also the default high-level observation grid.
  VoxelGridSpec workspace = VoxelGridSpec::centered(0x1.0p-5, 16, 16, 0.0, 6);
  int points_per_face = 40;
  double max_speed = 0.02;  // m per tick
  int dwell_ticks = 4;
  int t_hist = 1;
  int t_act = 3;
  double grasp_radius = 0.03;
  double push_distance = 0.05;
};

struct SceneObject {
  enum class Kind { Cube, Pad };
  Kind kind = Kind::Cube;
  Vec3 center = Vec3::Zero();
  Mat3 q = Mat3::Identity();
  Vec3 color = Vec3::Zero();
  std::vector<Vec3> offsets;  // surface samples in the object frame

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  TaskId task = TaskId::Reach;
  std::uint64_t seed = 0;
  GroupElement g_scene;
  std::vector<SceneObject> objects;
  int object = -1;  // manipulated cube
  int target = -1;  // reach target cube or goal pad
  double table_z = 0.0;
  double half = 0.0;  // cube half size
  GripperState gripper;
  int held = -1;
  Vec3 held_offset = Vec3::Zero();
  std::vector<GripperState> states;    // visited gripper states, oldest first
  std::vector<GripperState> commands;  // executed commands, oldest first
  int tick = 0;
  int clamped = 0;  // commands clamped into the workspace

  /// Goal point of the task (reach target center or pad center at cube height).
  Vec3 goal() const;
  bool operator==(const Scene&) const = default;
};

/// Deterministic canonical layout from the seed, then transformed by g_scene.
/// Throws InvalidArgument when the transform pushes anything out of the workspace.
Scene reset(TaskId task, std::uint64_t seed, const GroupElement& g_scene, const EnvConfig& cfg = {});

Observation observe(const Scene& scene, const EnvConfig& cfg = {});

/// Teleports the gripper to the (clamped) command and applies the grasp,
/// release and push rules.
struct StepResult {
  Observation obs;
  bool done = false;
};
StepResult step(Scene& scene, const GripperState& command, const EnvConfig& cfg = {});

Scene act_scene(const GroupElement& g, const Scene& scene);

bool task_success(const Scene& scene, const TaskSpec& spec);

struct ExpertPhase {
  std::string name;
  std::size_t frame = 0;
};

struct ExpertDemo {
  Demonstration demo;
  std::vector<ExpertPhase> phases;
  Scene final_scene;
};

/// Scripted waypoint expert. Throws InvalidArgument for unsolvable scenes.
ExpertDemo expert_policy(const Scene& scene, const EnvConfig& cfg = {});

/// Remaining expert commands from the current scene state (no leading dwell).
std::vector<GripperState> expert_plan(const Scene& scene, const EnvConfig& cfg = {}, bool leading_dwell = false);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual ActionChunk act(const Scene& scene, const Observation& obs, Rng& rng) = 0;
};

class ExpertAsPolicy : public Policy {
 public:
  ExpertAsPolicy(int m, EnvConfig cfg = {}) : m_(m), cfg_(std::move(cfg)) {}
  ActionChunk act(const Scene& scene, const Observation& obs, Rng& rng) override;

 private:
  int m_;
  EnvConfig cfg_;
};

class RandomPolicy : public Policy {
 public:
  RandomPolicy(int m, EnvConfig cfg = {}) : m_(m), cfg_(std::move(cfg)) {}
  ActionChunk act(const Scene& scene, const Observation& obs, Rng& rng) override;

 private:
  int m_;
  EnvConfig cfg_;
};

struct RolloutResult {
  bool success = false;
  int steps = 0;
  std::vector<GripperState> trace;
  std::string error;  // non-empty when the episode was aborted
  Scene final_scene;
};

/// Open: `segments` predictions, each executed for all m steps. Closed:
/// replan every `replan` executed steps until max_ticks.
RolloutResult rollout(Policy& policy, const TaskSpec& task, Scene scene, ControlMode mode, Rng& rng,
                      const EnvConfig& cfg = {}, int replan = 9);

/// Scene transforms drawn uniformly from rotations x translations.
struct TransformSet {
  int u = 4;
  std::vector<int> rotations = {0, 1, 2, 3};
  std::vector<Vec3> translations = {Vec3::Zero()};

  GroupElement sample(Rng& rng) const;
  /// Translations on a square lattice {-n..n} x {-n..n} x {0} with pitch `step`.
  static std::vector<Vec3> grid(int n, double step, bool include_center = true);
};

struct EpisodeRow {
  int episode = 0;
  std::uint64_t seed = 0;
  GroupElement transform;
  bool success = false;
  int steps = 0;
};

struct EvalReport {
  std::vector<EpisodeRow> rows;
  double rate() const;
  /// 95% Wilson score interval of the success rate.
  std::pair<double, double> interval() const;
  std::string csv() const;
};

struct EvalOptions {
  int episodes = 100;
  std::uint64_t seed_offset = 0;      // episode i uses scene seed seed_offset + i
  std::uint64_t transform_seed = 1;   // stream for scene transforms
  std::uint64_t policy_seed = 2;      // stream for policy sampling
  ControlMode mode = ControlMode::Open;
  TransformSet transforms;
  /// Explicit per-episode transforms; overrides `transforms` when non-empty.
  std::vector<GroupElement> fixed_transforms;
  /// Use this scene seed for every episode instead of seed_offset + i.
  bool fixed_seed = false;
};

EvalReport evaluate(Policy& policy, TaskId task, const EvalOptions& opt, const EnvConfig& cfg = {});

inline constexpr const char* kEvalCsvHeader = "episode,seed,transform_m,transform_tx,transform_ty,transform_tz,success,steps";

}  // namespace hep
