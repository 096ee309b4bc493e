#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "resflow/rng.hpp"
#include "resflow/tensor.hpp"

namespace resflow {

using ParamId = std::size_t;
using ValueId = std::size_t;

// Named trainable parameters with paired gradient storage. Parameters are
// registered once at model-build time; tapes read values and accumulate
// gradients here.
class ParamStore {
 public:
  ParamId add(std::string name, Mat value);

  std::size_t count() const { return entries_.size(); }
  const std::string& name(ParamId id) const { return entries_[id].name; }
  Mat& value(ParamId id) { return entries_[id].value; }
  const Mat& value(ParamId id) const { return entries_[id].value; }
  Mat& grad(ParamId id) { return entries_[id].grad; }
  const Mat& grad(ParamId id) const { return entries_[id].grad; }

  bool contains(const std::string& name) const {
    return by_name_.count(name) != 0;
  }
  ParamId id_of(const std::string& name) const;

  void zero_grad();
  // Total number of scalar parameters.
  std::size_t scalar_count() const;

 private:
  struct Entry {
    std::string name;
    Mat value;
    Mat grad;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, ParamId> by_name_;
};

// Reverse-mode autodiff over batched matrix ops. A Tape is built fresh for
// every forward pass; backward() replays recorded closures in reverse order
// and accumulates parameter gradients into the ParamStore.
class Tape {
 public:
  explicit Tape(ParamStore& params) : params_(&params) {}

  ValueId constant(Mat v);

  // y = x * W + b, with W (in x out) and b (1 x out) broadcast over rows.
  ValueId affine(ValueId x, ParamId w, ParamId b);
  // y_ij = x_ij > 0 ? x_ij : a_j * x_ij, slope a is a (1 x cols) parameter.
  ValueId prelu(ValueId x, ParamId slope);
  ValueId sigmoid(ValueId x);
  // Inverted dropout: kept units scaled by 1/(1-rate) so eval needs no
  // rescaling. rate==0 is an identity.
  ValueId dropout(ValueId x, double rate, Rng& rng);

  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);  // elementwise
  ValueId scale(ValueId x, double c);
  ValueId clamp(ValueId x, double lo, double hi);
  ValueId positive_part(ValueId x);  // max(x, 0)
  ValueId min_zero(ValueId x);       // min(x, 0)
  // (N x d, N x d) -> (N x 1), per-row inner product.
  ValueId row_dot(ValueId a, ValueId b);
  ValueId concat(const std::vector<ValueId>& xs);
  // Rows of a parameter table selected per sample; backward scatter-adds.
  ValueId gather_rows(ParamId table, std::vector<std::size_t> ids);
  // Sum-pooled rows per sample (multi-value fields). An empty group yields
  // a zero row.
  ValueId gather_sum_rows(ParamId table,
                          std::vector<std::vector<std::size_t>> groups);
  // Scalar total of all entries.
  ValueId sum(ValueId x);

  // Per-sample weighted cross-entropy, -w*(y*ln p + (1-y)*ln(1-p)), with p
  // clamped to [1e-7, 1-1e-7] first. Labels and weights are data, not
  // differentiated. Output is N x 1.
  ValueId bce(ValueId p, const Mat& y, const Mat& w);
  // Per-sample (pred - target)^2, N x 1.
  ValueId squared_error(ValueId pred, const Mat& target);

  const Mat& value(ValueId id) const { return nodes_[id].value; }
  const Mat& grad(ValueId id) const { return nodes_[id].grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape backwards. loss must be
  // a 1x1 value. Parameter gradients accumulate (caller zeroes between
  // batches).
  void backward(ValueId loss);

  static constexpr double kProbFloor = 1e-7;

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;
  };

  ValueId push(Mat value, std::function<void()> back = nullptr);
  Mat& node_grad(ValueId id) { return nodes_[id].grad; }

  ParamStore* params_;
  std::vector<Node> nodes_;
};

// Finite-difference verification of tape gradients.
//
// `loss_fn` must evaluate the model loss from the current parameter values;
// when `with_grad` is true it must also run backward() so analytic
// gradients land in the store. Implementations must be deterministic given
// equal parameters (re-seed any internal RNG per call).
struct GradCheckReport {
  bool ok = true;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

GradCheckReport check_gradients(
    ParamStore& params, const std::function<double(bool with_grad)>& loss_fn,
    double h = 1e-4, double tol = 1e-4, std::size_t max_coords_per_param = 0,
    Rng* coord_rng = nullptr,
    const std::function<void(ParamStore&)>& after_grad = nullptr);

}  // namespace resflow
