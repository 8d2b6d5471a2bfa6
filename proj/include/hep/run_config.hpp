#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hep/env.hpp"
#include "hep/high_level.hpp"
#include "hep/low_level.hpp"
#include "hep/nn/param.hpp"

namespace hep {

enum class Ablation { Full, NoFT, NoEqui, NoStackedVoxel };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

/// Scene transforms used for demos or evaluation.
struct TransformConfig {
  std::vector<int> rotations = {0, 1, 2, 3};
  std::vector<Vec3> translations = {Vec3::Zero()};
  std::uint64_t seed = 1;
};

struct DemoConfig {
  int count = 20;
  std::uint64_t seed_offset = 100000;  // disjoint from evaluation seeds 0..n-1
  TransformConfig transforms;
};

struct EvalConfig {
  int episodes = 100;
  std::uint64_t seed_offset = 0;
  std::uint64_t policy_seed = 2;
  int replan = 9;
  TransformConfig transforms;
  std::vector<GroupElement> fixed_transforms;
  bool fixed_seed = false;
};

/// One run: task, model, optimizer, data and paths. Loaded from JSON; every
/// key is validated and unknown keys are rejected.
struct RunConfig {
  TaskId task = TaskId::PickLift;
  ControlMode mode = ControlMode::Open;
  Ablation ablation = Ablation::Full;
  std::uint64_t seed = 0;

  // observation grid (also the workspace)
  double resolution = 0x1.0p-5;
  int nxy = 16;
  int nz = 16;
  double z_min = 0.0;
  int max_points = 6;

  int u = 4;
  int m = 18;
  int t_hist = 1;
  int t_act = 3;
  int K = 100;

  // high level
  std::vector<int> encoder_hidden = {4, 4};
  std::vector<int> encoder_out = {0, 0, 2};  // n0, n1, nreg
  std::vector<int> unet_widths = {1, 2, 4};
  int kernel = 3;
  nn::Padding padding = nn::Padding::Circular;

  // low level
  std::vector<int> obs_hidden = {4, 8};
  std::vector<int> obs_out = {8, 0, 8};
  int hidden = 32;
  int layers = 2;
  int time_dim = 16;
  double beta_1 = 1e-4;
  double beta_K = 7e-2;
  double crop = 0.125;
  double pos_scale = 0.25;
  LowLevelConfig::Target target = LowLevelConfig::Target::Sample;

  // optimizer
  nn::AdamWConfig optim;
  int batch = 16;
  int batch_high = 16;
  int iterations = 1000;
  int checkpoint_every = 500;
  int log_every = 10;

  DemoConfig demos;
  EvalConfig eval;

  std::string dataset = "data/demos.hepd";
  std::string out = "runs/default";
  std::string checkpoint;  // for eval/audit; empty: <out>/last.hepc

  HighLevelConfig high_config() const;
  LowLevelConfig low_config() const;
  EnvConfig env_config() const;
  EvalOptions eval_options() const;
  TransformSet demo_transforms() const;

  /// Throws InvalidArgument naming the offending key.
  void validate() const;
  std::string to_json() const;
};

/// Parses a JSON config; `overrides` are "dotted.key=value" strings applied on
/// top of the file (values parsed as JSON, falling back to plain strings).
RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Config fields that change parameter shapes or semantics; two runs whose
/// model keys differ cannot share checkpoints.
std::string model_signature(const RunConfig& c);

}  // namespace hep
