#pragma once

#include "resflow/adam.hpp"
#include "resflow/metrics.hpp"
#include "resflow/model.hpp"

namespace resflow {

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 512;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct TrainResult {
  // Mean joint loss per batch, in execution order.
  std::vector<double> loss_trace;
  std::size_t steps = 0;
};

// Full shuffle per epoch, final partial batch kept. Aborts with a
// NumericError naming the batch and task when the loss stops being finite.
// Deterministic for a fixed seed.
TrainResult train(MultiTaskModel& model, Adam& optimizer, const Dataset& data,
                  const TrainOptions& opts);

struct EvalOptions {
  std::vector<std::size_t> ks = {10, 50, 100};
  // Task whose probability ranks the lists; empty means the last task.
  std::string ranking_task;
};

// Per-task AUC (skipped for single-class columns), MSE for regression
// heads, decoded-expectation MSE in progressive mode, and the list metrics
// when the dataset carries list ids.
MetricReport evaluate_model(const MultiTaskModel& model, const Dataset& data,
                            const EvalOptions& opts = {});

// Rounds every parameter through 32-bit floats, exactly matching what a
// checkpoint stores; evaluating after this is bit-identical to evaluating
// after a save/load round trip.
void quantize_params(ParamStore& params);

}  // namespace resflow
