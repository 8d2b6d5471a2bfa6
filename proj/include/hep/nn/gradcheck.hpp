#pragma once

#include <functional>
#include <string>

#include "hep/nn/param.hpp"

namespace hep::nn {

struct GradCheckConfig {
  int samples = 200;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error |a - f| / max(|a|, |f|, floor),
  /// so parameters with (near) zero gradient are judged on absolute error.
  double floor = 1e-5;
};

struct GradCheckResult {
  int checked = 0;
  int passed = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"

  bool ok() const { return checked > 0 && passed == checked; }
};

/// Compares analytic gradients with central finite differences on randomly
/// chosen raw parameter entries (block chosen uniformly, then entry).
/// `loss(with_grad)` must rebuild the computation from the current parameter
/// values and, when with_grad is set, run backward and accumulate gradients.
GradCheckResult grad_check(ParamStore& store, const std::function<double(bool)>& loss, Rng& rng,
                           const GradCheckConfig& cfg = {});

}  // namespace hep::nn
