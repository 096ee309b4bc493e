#include "resflow/progressive.hpp"

#include <algorithm>

namespace resflow {

ThresholdLadder::ThresholdLadder(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.size() < 2)
    throw ConfigError("threshold ladder needs at least two values");
  for (std::size_t i = 1; i < values_.size(); ++i)
    if (values_[i] <= values_[i - 1])
      throw ConfigError("threshold ladder must be strictly increasing");
}

std::vector<double> encode_labels(double v, const ThresholdLadder& ladder) {
  const double c = std::clamp(v, ladder.min(), ladder.max());
  std::vector<double> labels(ladder.tasks());
  for (std::size_t k = 1; k <= ladder.tasks(); ++k)
    labels[k - 1] = ladder.v(k) <= c ? 1.0 : 0.0;
  return labels;
}

double decode_expectation(const std::vector<double>& q,
                          const ThresholdLadder& ladder) {
  if (q.size() != ladder.tasks())
    throw UsageError("decode_expectation: expected " +
                     std::to_string(ladder.tasks()) + " probabilities, got " +
                     std::to_string(q.size()));
  for (double p : q)
    if (p < 0.0 || p > 1.0)
      throw UsageError("decode_expectation: probabilities must be in [0, 1]");
  const std::size_t K = ladder.tasks();
  double e = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double qk = k == 0 ? 1.0 : q[k - 1];
    const double qn = q[k];
    e += ladder.v(k) * std::max(qk - qn, 0.0);
  }
  e += ladder.v(K) * q[K - 1];
  // Clamped mass differences can overshoot unit total mass when the chain is
  // not monotone; pin the expectation to the ladder span.
  return std::clamp(e, ladder.v(0), ladder.v(K));
}

double regression_mse(const std::vector<double>& predictions,
                      const std::vector<double>& targets) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw UsageError("regression_mse: need equal-length non-empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

}  // namespace resflow
