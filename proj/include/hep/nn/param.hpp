#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "hep/group.hpp"
#include "hep/rng.hpp"

namespace hep::nn {

/// How a raw parameter block is mapped to the effective weight.
///   None    effective = raw
///   Linear  W_eq = (1/u) sum_g rho_out(g) W rho_in(g)^-1, W is [out, in]
///   Bias    b_eq = (1/u) sum_g rho_out(g) b
///   Conv    K_eq(d) = (1/u) sum_g rho_out(g) K(R_g^-1 d) rho_in(g)^-1,
///           K is [out, in, k, k, k] with taps (z, y, x)
/// Each map is an orthogonal projection (the group average of orthogonal
/// maps), so its adjoint is itself.
enum class TyingKind { None, Linear, Bias, Conv };

struct Tying {
  TyingKind kind = TyingKind::None;
  RepSpec in;
  RepSpec out;

  bool operator==(const Tying&) const = default;
};

std::string to_string(TyingKind k);
TyingKind tying_kind_from_string(const std::string& s);

struct Parameter {
  std::string name;
  std::vector<int> shape;
  Tying tying;
  std::vector<double> value;  // raw
  std::vector<double> grad;   // d loss / d raw

  std::size_t size() const { return value.size(); }

  /// Projected weight, recomputed only when the raw values changed.
  const std::vector<double>& effective() const;

 private:
  mutable std::vector<double> cache_raw_;
  mutable std::vector<double> cache_eff_;
};

/// Effective weight from a raw block. Throws InexactTransform for a conv tie
/// whose rotations are not quarter turns.
std::vector<double> project(const Tying& tying, const std::vector<int>& shape,
                            const std::vector<double>& raw);

/// Stable-address parameter container.
class ParamStore {
 public:
  /// Raw entries are drawn N(0, 1) and rescaled so the effective weight has
  /// rms `std`.
  Parameter& add(const std::string& name, std::vector<int> shape, Tying tying, Rng& rng,
                 double std);
  Parameter& add_zeros(const std::string& name, std::vector<int> shape, Tying tying);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::deque<Parameter>& params() { return params_; }
  const std::deque<Parameter>& params() const { return params_; }
  std::size_t count() const;  // total scalar parameters

  void zero_grad();
  double grad_norm() const;

 private:
  std::deque<Parameter> params_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double wd = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Decoupled weight decay: p <- p (1 - lr wd), then the bias-corrected Adam
/// update. State buffers are created on first use; a later shape change is
/// rejected.
void adamw_step(ParamStore& store, AdamState& state, const AdamWConfig& cfg);

}  // namespace hep::nn
