#include "resflow/layers.hpp"

#include <cmath>

namespace resflow {

Activation activation_from_string(const std::string& s) {
  if (s == "identity" || s == "linear") return Activation::kIdentity;
  if (s == "prelu") return Activation::kPRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "min-zero" || s == "min_zero") return Activation::kMinZero;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kPRelu: return "prelu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kMinZero: return "min-zero";
  }
  return "?";
}

DenseLayer make_dense(ParamStore& params, Rng& rng, const std::string& prefix,
                      std::size_t in, std::size_t out, Activation act,
                      double dropout) {
  if (in == 0 || out == 0) throw ConfigError("dense layer with zero width");
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Mat w(in, out);
  for (double& v : w.raw()) v = rng.uniform(-limit, limit);
  DenseLayer layer;
  layer.w = params.add(prefix + ".w", std::move(w));
  layer.b = params.add(prefix + ".b", Mat(1, out));
  if (act == Activation::kPRelu)
    layer.slope = params.add(prefix + ".slope", Mat(1, out));
  layer.act = act;
  layer.in = in;
  layer.out = out;
  layer.dropout = dropout;
  return layer;
}

ValueId dense_forward(Tape& tape, const DenseLayer& layer, ValueId x,
                      bool training, Rng& rng) {
  ValueId y = tape.affine(x, layer.w, layer.b);
  switch (layer.act) {
    case Activation::kIdentity: break;
    case Activation::kPRelu: y = tape.prelu(y, layer.slope); break;
    case Activation::kSigmoid: y = tape.sigmoid(y); break;
    case Activation::kMinZero: y = tape.min_zero(y); break;
  }
  if (training && layer.dropout > 0.0) y = tape.dropout(y, layer.dropout, rng);
  return y;
}

Mlp make_mlp(ParamStore& params, Rng& rng, const std::string& prefix,
             std::size_t in, const std::vector<std::size_t>& dims,
             Activation hidden_act, double dropout) {
  if (dims.empty()) throw ConfigError("mlp needs at least one layer");
  Mlp mlp;
  std::size_t cur = in;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const bool last = (l + 1 == dims.size());
    mlp.layers.push_back(make_dense(
        params, rng, prefix + ".l" + std::to_string(l), cur, dims[l],
        last ? Activation::kIdentity : hidden_act, last ? 0.0 : dropout));
    cur = dims[l];
  }
  return mlp;
}

ValueId mlp_forward(Tape& tape, const Mlp& mlp, ValueId x, bool training,
                    Rng& rng) {
  std::vector<ValueId> ignored;
  return mlp_forward_collect(tape, mlp, x, training, rng, ignored);
}

ValueId mlp_forward_collect(Tape& tape, const Mlp& mlp, ValueId x,
                            bool training, Rng& rng,
                            std::vector<ValueId>& layer_outputs) {
  layer_outputs.clear();
  ValueId cur = x;
  for (const DenseLayer& layer : mlp.layers) {
    cur = dense_forward(tape, layer, cur, training, rng);
    layer_outputs.push_back(cur);
  }
  return cur;
}

}  // namespace resflow
