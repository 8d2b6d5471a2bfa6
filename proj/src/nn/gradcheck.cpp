#include "hep/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hep/error.hpp"

namespace hep::nn {

GradCheckResult grad_check(ParamStore& store, const std::function<double(bool)>& loss, Rng& rng,
                           const GradCheckConfig& cfg) {
  auto& params = store.params();
  if (params.empty()) throw InvalidArgument("grad_check: no parameters");
  store.zero_grad();
  loss(true);

  GradCheckResult res;
  for (int s = 0; s < cfg.samples; ++s) {
    Parameter& p = params[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(params.size()) - 1))];
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(p.size()) - 1));
    const double orig = p.value[i];
    p.value[i] = orig + cfg.step;
    const double lp = loss(false);
    p.value[i] = orig - cfg.step;
    const double lm = loss(false);
    p.value[i] = orig;
    const double fd = (lp - lm) / (2.0 * cfg.step);
    const double an = p.grad[i];
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), cfg.floor});
    ++res.checked;
    if (rel <= cfg.tolerance) ++res.passed;
    if (rel >= res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst = p.name + "[" + std::to_string(i) + "]";
    }
  }
  return res;
}

}  // namespace hep::nn
