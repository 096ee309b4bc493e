#pragma once

#include <vector>

#include "resflow/errors.hpp"

namespace resflow {

// Strictly increasing thresholds v_0 < ... < v_K over a bounded numeric
// target. Each threshold above the minimum defines one binary task:
// task k fires when v_k <= v.
class ThresholdLadder {
 public:
  explicit ThresholdLadder(std::vector<double> values);

  std::size_t tasks() const { return values_.size() - 1; }  // K
  double v(std::size_t k) const { return values_[k]; }      // k in 0..K
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

// Binary labels for tasks 1..K; the target is clamped into [v_0, v_K] first.
std::vector<double> encode_labels(double v, const ThresholdLadder& ladder);

// Expected value from exceedance probabilities Q_k = P(v >= v_k), k = 1..K:
//   E(v) = sum_{k=0}^{K-1} v_k * max(Q_k - Q_{k+1}, 0) + v_K * Q_K
// with Q_0 = 1. Negative mass differences clamp to zero, so the result
// always stays inside [v_0, v_K].
double decode_expectation(const std::vector<double>& q,
                          const ThresholdLadder& ladder);

// Mean squared error over aligned prediction/target vectors.
double regression_mse(const std::vector<double>& predictions,
                      const std::vector<double>& targets);

}  // namespace resflow
