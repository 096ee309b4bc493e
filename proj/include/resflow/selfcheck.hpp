#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "resflow/autograd.hpp"

namespace resflow {

struct SelfCheckSummary {
  std::size_t instances = 0;
  std::size_t failures = 0;
  double worst_rel_err = 0.0;
  std::string worst_param;
  std::string worst_instance;

  bool ok() const { return failures == 0; }
};

// Finite-difference verification over randomized model instances covering
// the three modes, twin towers, the mandate, both residual placements,
// every regularizer, mixed loss kinds, and dropout. `tamper`, when set, is
// applied to the analytic gradients right before comparison — the
// negative-control hook, which must make the suite fail.
SelfCheckSummary run_gradcheck_suite(
    std::uint64_t seed, std::size_t instances,
    const std::function<void(ParamStore&)>& tamper = nullptr);

}  // namespace resflow
