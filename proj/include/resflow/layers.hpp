#pragma once

#include <string>
#include <vector>

#include "resflow/adam.hpp"
#include "resflow/autograd.hpp"
#include "resflow/rng.hpp"

namespace resflow {

enum class Activation { kIdentity, kPRelu, kSigmoid, kMinZero };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// One fully connected layer. PReLU slopes are per-unit parameters starting
// at zero (so the unit begins as a plain ReLU).
struct DenseLayer {
  ParamId w = 0;
  ParamId b = 0;
  ParamId slope = 0;  // only valid when act == kPRelu
  Activation act = Activation::kIdentity;
  std::size_t in = 0;
  std::size_t out = 0;
  double dropout = 0.0;
};

// Registers parameters for a layer under `prefix`. Weights use a uniform
// range of +/- sqrt(6 / (fan_in + fan_out)); biases start at zero.
DenseLayer make_dense(ParamStore& params, Rng& rng, const std::string& prefix,
                      std::size_t in, std::size_t out, Activation act,
                      double dropout = 0.0);

// affine -> activation -> (training only) dropout.
ValueId dense_forward(Tape& tape, const DenseLayer& layer, ValueId x,
                      bool training, Rng& rng);

// A stack of dense layers applied in order.
struct Mlp {
  std::vector<DenseLayer> layers;
};

// Hidden layers get `hidden_act` and `dropout`; the final layer is a plain
// affine map (identity activation, no dropout) producing `dims.back()`
// outputs.
Mlp make_mlp(ParamStore& params, Rng& rng, const std::string& prefix,
             std::size_t in, const std::vector<std::size_t>& dims,
             Activation hidden_act, double dropout);

ValueId mlp_forward(Tape& tape, const Mlp& mlp, ValueId x, bool training,
                    Rng& rng);

// Same as mlp_forward but also reports each layer's output, for residual
// wiring between towers and for activation dumps.
ValueId mlp_forward_collect(Tape& tape, const Mlp& mlp, ValueId x,
                            bool training, Rng& rng,
                            std::vector<ValueId>& layer_outputs);

}  // namespace resflow
