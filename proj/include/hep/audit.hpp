#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hep/nn/gradcheck.hpp"
#include "hep/train.hpp"

namespace hep {

/// One invariant check: the largest residual seen against its tolerance.
/// Bit-exact checks have tolerance 0.
struct AuditCheck {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  int compared = 0;  // cases that entered the residual
  std::string note;

  bool pass() const { return compared > 0 && residual <= tolerance; }
};

struct AuditReport {
  std::vector<AuditCheck> checks;

  bool ok() const;
  /// First failing check, or nullptr.
  const AuditCheck* first_failure() const;
  /// "check,residual,tolerance,compared,status" with one row per check.
  std::string csv() const;
};

struct AuditOptions {
  std::uint64_t seed = 0;
  int group_pairs = 200;
  int clouds = 20;        // random clouds for the stacked-voxel check
  int scenes = 10;        // environment scenes for the policy checks
  int frame_inputs = 100; // random inputs for the frame transfer laws
  int grad_samples = 200;
  double argmax_margin = 1e-3;
  bool gradients = true;
};

/// Runs the invariant suite on the agent's current weights in 64-bit with
/// circular padding (the padding is restored afterwards):
///   group.homomorphism, group.inverse, stacked_voxel.f32, stacked_voxel.f64,
///   layer.encoder, layer.unet, layer.eps, high.heatmap, high.argmax,
///   low.pi_low, policy.pi, t3.frame_transfer, t3.pi_low_stub, t3.pi_stub,
///   t3.pi, grad.check.
AuditReport run_audit(Agent& agent, const AuditOptions& opt = {});

/// Central finite differences against analytic gradients on randomly chosen
/// raw entries of every parameter block, through the sum of the high-level
/// cross entropy and the low-level loss on one environment scene (64-bit).
nn::GradCheckResult check_gradients(Agent& agent, std::uint64_t seed, const nn::GradCheckConfig& cfg = {});

/// Mutation helper: unties the first tied parameter whose name starts with
/// `prefix` and perturbs its effective weight. Returns the parameter name;
/// throws InvalidArgument when none matches.
std::string corrupt_tied_weight(nn::ParamStore& store, const std::string& prefix, std::uint64_t seed,
                                double scale = 0.1);

/// Random cloud with coordinates at odd multiples of 2^-11 (never on a voxel
/// face of grids coarser than 2^-10) inside [lo, hi] per axis.
PointCloud random_interior_cloud(Rng& rng, std::size_t n, const Vec3& lo, const Vec3& hi, int kf = 3);

/// Largest absolute difference over positions, rotations and apertures.
double chunk_residual(const ActionChunk& a, const ActionChunk& b);
bool bit_equal(const ActionChunk& a, const ActionChunk& b);
bool bit_equal(const Observation& a, const Observation& b);

}  // namespace hep
