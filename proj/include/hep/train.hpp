#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hep/dataset.hpp"
#include "hep/env.hpp"
#include "hep/nn/checkpoint.hpp"
#include "hep/run_config.hpp"

namespace hep {

/// Both levels built from one run config, sharing one parameter store.
struct Agent {
  explicit Agent(const RunConfig& cfg);
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  RunConfig cfg;
  nn::ParamStore store;
  std::unique_ptr<HighLevelNet> high;
  std::unique_ptr<EpsNet> eps;
  LowLevelPolicy low;

  PolicyOutput act(const Observation& o, Rng& rng) const;
};

/// The hierarchical policy as an environment policy.
class AgentPolicy : public Policy {
 public:
  explicit AgentPolicy(const Agent& agent) : agent_(agent) {}
  ActionChunk act(const Scene& scene, const Observation& obs, Rng& rng) override;

 private:
  const Agent& agent_;
};

/// Expert demos for the config's task and demo transform set. Throws
/// InvalidArgument listing the seeds when more than 5% are unsolvable.
std::vector<Demonstration> generate_demos(const RunConfig& cfg, int* skipped = nullptr);

/// Training pairs of the config's mode and horizon from expert demos.
std::vector<TrainingPair> training_pairs(const RunConfig& cfg, const std::vector<Demonstration>& demos);
/// Pairs from a dataset file (demonstrations or pairs); the header must match
/// the config.
std::vector<TrainingPair> load_training_pairs(const RunConfig& cfg, const Dataset& ds);

struct StepStats {
  double loss_high = 0.0;
  double loss_low = 0.0;
  double grad_norm = 0.0;
};

/// One optimizer over both levels; every iteration takes a high-level and a
/// low-level batch, drawn from a stream seeded by (seed, iteration).
class Trainer {
 public:
  Trainer(Agent& agent, std::vector<TrainingPair> pairs);

  /// Throws NumericalError on a non-finite loss or gradient, before touching
  /// the parameters.
  StepStats step();

  /// Mean losses over every pair with fixed diffusion draws (double precision).
  StepStats evaluate_losses(std::uint64_t seed, int draws = 4) const;

  std::int64_t iteration() const { return iteration_; }
  const nn::AdamState& adam() const { return adam_; }

  nn::Checkpoint checkpoint() const;
  /// Restores parameters, optimizer state and the iteration counter.
  void resume(const nn::Checkpoint& ck);

 private:
  Agent& agent_;
  std::vector<TrainingPair> pairs_;
  std::vector<std::size_t> targets_;
  nn::AdamState adam_;
  std::int64_t iteration_ = 0;
};

inline constexpr const char* kMetricsCsvHeader = "iter,loss_high,loss_low,grad_norm,wallclock_s";

struct TrainResult {
  std::int64_t iterations = 0;
  StepStats last;
  std::string checkpoint;  // path of the final checkpoint
};

/// Runs cfg.iterations in total (counting resumed ones), writing
/// <out>/metrics.csv, <out>/ckpt_<iter>.hepc every checkpoint_every
/// iterations and <out>/last.hepc at the end. On a numerical failure the
/// last good checkpoint is kept and NumericalError propagates.
TrainResult run_training(Agent& agent, const std::vector<TrainingPair>& pairs, const std::string& resume_from = "",
                         const std::function<void(std::int64_t, const StepStats&)>& on_log = {});

/// Loads a checkpoint into an agent; rejects checkpoints whose model
/// signature differs from the agent's config.
void load_agent(Agent& agent, const nn::Checkpoint& ck);

/// Heatmap debug dump ("HEPH"): grid spec, channel count, logits.
void write_heatmap(const std::string& path, const VoxelGrid& hm);
VoxelGrid read_heatmap(const std::string& path);

}  // namespace hep
