#pragma once

#include <cstdint>
#include <vector>

#include "resflow/autograd.hpp"

namespace resflow {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction and a fixed learning rate. Moment buffers mirror
// the ParamStore layout; the step counter is global (one tick per batch).
class Adam {
 public:
  Adam(ParamStore& params, AdamConfig cfg = {});

  // Applies one update from the gradients currently in the store.
  void step();

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamStore* params_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace resflow
