#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hep/high_level.hpp"
#include "hep/nn/graph.hpp"
#include "hep/nn/layers.hpp"
#include "hep/types.hpp"

namespace hep {

/// DDPM noise schedule, 1-based: beta[k] for k = 1..K (index 0 unused).
struct DiffusionSchedule {
  int K = 0;
  std::vector<double> beta, alpha, alpha_bar;

  /// Linear beta from beta_1 to beta_K.
  static DiffusionSchedule linear(int K, double beta_1 = 1e-4, double beta_K = 7e-2);
  /// Posterior variance of the reverse step k (k >= 2; zero for k = 1).
  double posterior_variance(int k) const;
};

/// Flattened action chunk in diffusion coordinates. Per step: position
/// (scaled by 1/pos_scale), first two rotation columns, aperture as 2c - 1.
/// Layout follows the rep order: all rho0 entries first (per step: z, col1 z,
/// col2 z, aperture), then all rho1 pairs (per step: xy, col1 xy, col2 xy).
struct ActionCodec {
  int m = 18;
  int u = 4;
  double pos_scale = 0.25;

  int dim() const { return 10 * m; }
  RepSpec rep() const { return {u, 4 * m, 3 * m, 0}; }

  std::vector<double> encode(const ActionChunk& a) const;
  /// Gram-Schmidt on the rotation columns, aperture clamped to [0, 1],
  /// positions snapped to the position lattice.
  ActionChunk decode(std::span<const double> v) const;
};

/// Subtracts t from every position (cloud, histories); everything else is untouched.
Observation frame_transfer_obs(const Observation& o, const Vec3& t);
ActionChunk frame_transfer_action(const ActionChunk& a, const Vec3& t);

/// a^k = sqrt(alpha_bar[k]) a0 + sqrt(1 - alpha_bar[k]) noise.
std::vector<double> ddpm_forward(const DiffusionSchedule& s, std::span<const double> a0, int k,
                                 std::span<const double> noise);

struct LowLevelConfig {
  /// What the network regresses: the noise e^k directly, or the clean action
  /// a^0 from which the noise estimate (a^k - sqrt(ab) a^0) / sqrt(1 - ab)
  /// is derived. Both give the sampler a noise prediction.
  enum class Target { Epsilon, Sample };

  int m = 18;
  int t_hist = 1;
  int t_act = 3;
  int kf = 3;
  int u = 4;
  double pos_scale = 0.25;
  double crop = 0.125;  // half-size of the cube kept around the keypose
  std::vector<int> obs_hidden = {4, 8};
  RepSpec obs_out = {4, 8, 0, 8};
  int hidden = 32;  // regular multiplicity of the noise predictor layers
  int layers = 2;
  int time_dim = 16;
  int K = 100;
  double beta_1 = 1e-4;
  double beta_K = 7e-2;
  bool frame_transfer = true;  // false: the No-FT ablation
  bool tied = true;
  Target target = Target::Sample;

  void validate() const;
  ActionCodec codec() const { return {m, u, pos_scale}; }
  DiffusionSchedule schedule() const { return DiffusionSchedule::linear(K, beta_1, beta_K); }
};

/// Noise predictor interface used by the sampler. bind() fixes the
/// observation (already frame-transferred) and, for the No-FT variant, the
/// keypose conditioning; the returned function maps (a^k, k) to e^k.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  using Bound = std::function<std::vector<double>(std::span<const double> a_k, int k)>;
  virtual Bound bind(const Observation& o_star, const Vec3& cond) const = 0;
};

/// The equivariant noise predictor epsilon(o, a^k, k): a PointNet over the
/// cropped cloud, the gripper histories, the step embedding and the noisy
/// action enter one typed MLP.
class EpsNet : public NoisePredictor {
 public:
  EpsNet(nn::ParamStore& store, const LowLevelConfig& cfg, Rng& rng);

  /// One row per sample: a_k [B, codec.dim()], steps k in 1..K, cond holds
  /// the keypose (used only without frame transfer). Returns the regression
  /// output of the configured target.
  template <typename T>
  nn::Var forward(nn::Graph<T>& g, const std::vector<const Observation*>& obs, const std::vector<Vec3>& cond,
                  const nn::Tensor<T>& a_k, const std::vector<int>& k) const;

  Bound bind(const Observation& o_star, const Vec3& cond) const override;

  const LowLevelConfig& config() const { return cfg_; }
  /// Rep of the MLP input: observation features, histories, optional
  /// keypose, step embedding, noisy action.
  RepSpec input_rep() const;

 private:
  template <typename T>
  nn::Var encode_obs(nn::Graph<T>& g, const std::vector<const Observation*>& obs) const;
  template <typename T>
  nn::Var head(nn::Graph<T>& g, nn::Var obs_feat, const std::vector<const Observation*>& obs,
               const std::vector<Vec3>& cond, const nn::Tensor<T>& a_k, const std::vector<int>& k) const;

  LowLevelConfig cfg_;
  nn::EqPointNet obs_net_;
  nn::EqMLP mlp_;
  std::vector<int> perm_;
};

/// Gaussian draws for one reverse chain: x_K and the per-step noise.
struct SampleNoise {
  std::vector<double> init;
  std::vector<std::vector<double>> steps;  // steps[k] used when leaving step k (k >= 2)
};
SampleNoise draw_noise(int dim, int K, Rng& rng);
/// rho(g) applied to every draw, for matched-noise comparisons.
SampleNoise transform_noise(const SampleNoise& n, const RepSpec& rep, int m);

/// DDPM reverse chain from x_K to x_0, decoded. Throws NumericalError with the
/// step index and magnitude when values stop being finite.
ActionChunk sample_trajectory(const NoisePredictor& eps, const DiffusionSchedule& sched, const ActionCodec& codec,
                              const Observation& o_star, const Vec3& cond, const SampleNoise& noise);
ActionChunk sample_trajectory(const NoisePredictor& eps, const DiffusionSchedule& sched, const ActionCodec& codec,
                              const Observation& o_star, const Vec3& cond, Rng& rng);

/// The low-level agent with its schedule and codec.
struct LowLevelPolicy {
  const NoisePredictor* eps = nullptr;
  LowLevelConfig cfg;
  DiffusionSchedule sched;
};

/// pi_low(o, t_high) = tau(phi(tau(o, t_high)), -t_high). Without frame
/// transfer tau is the identity and t_high conditions epsilon instead.
ActionChunk pi_low(const LowLevelPolicy& low, const Observation& o, const Vec3& t_high, const SampleNoise& noise);
ActionChunk pi_low(const LowLevelPolicy& low, const Observation& o, const Vec3& t_high, Rng& rng);

struct PolicyOutput {
  Vec3 keypose = Vec3::Zero();
  double margin = 0.0;  // heatmap argmax margin
  ActionChunk chunk;
};

/// pi(o) = pi_low(o, t_high), t_high = argmax pi_high(o).
PolicyOutput pi_full(const HighLevelNet& high, const LowLevelPolicy& low, const Observation& o,
                     const SampleNoise& noise);
PolicyOutput pi_full(const HighLevelNet& high, const LowLevelPolicy& low, const Observation& o, Rng& rng);

/// Same pipeline, required to run without frame transfer (the No-FT ablation).
PolicyOutput pi_noft_variant(const HighLevelNet& high, const LowLevelPolicy& low, const Observation& o, Rng& rng);

/// Diffusion training targets for a batch of (observation, chunk) pairs:
/// keypose t_n is the last step's position, both are frame-transferred (when
/// enabled), then k and e^k are drawn.
struct LowBatch {
  std::vector<Observation> obs;
  std::vector<Vec3> cond;
  std::vector<double> a0;
  std::vector<double> a_k;
  std::vector<double> noise;
  std::vector<int> k;
};
LowBatch make_low_batch(const LowLevelConfig& cfg, const DiffusionSchedule& sched,
                        const std::vector<const Observation*>& obs, const std::vector<const ActionChunk*>& chunks,
                        Rng& rng);

/// Mean squared error of the network output against its target (e^k, or a^0
/// for the sample target) over batch and coordinates.
template <typename T>
nn::Var loss_low(nn::Graph<T>& g, const EpsNet& net, const LowBatch& batch);

/// A deliberately non-equivariant predictor that reads absolute coordinates
/// of whatever it is given; used to show T(3) equivariance of the full policy
/// does not depend on epsilon.
class TranslationSensitiveStub : public NoisePredictor {
 public:
  Bound bind(const Observation& o_star, const Vec3& cond) const override;
};

}  // namespace hep
