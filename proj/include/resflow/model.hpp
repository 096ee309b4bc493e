#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "resflow/embedding.hpp"
#include "resflow/layers.hpp"

namespace resflow {

enum class ModelMode { kNse, kEsmm, kResflow };
ModelMode model_mode_from_string(const std::string& s);
std::string to_string(ModelMode m);

enum class Regularizer { kNone, kM1, kM2, kM3 };
Regularizer regularizer_from_string(const std::string& s);
std::string to_string(Regularizer r);

struct RegSpec {
  Regularizer kind = Regularizer::kNone;
  double lambda = 0.0;  // unused by M3 (structural)
};

enum class LossKind { kBce, kMse };

// One inter-task residual edge. `layers` lists 1-based hidden depths that
// receive feature links; the final depth is controlled by `logit_link`.
struct ResidualEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::vector<std::size_t> layers;
  bool logit_link = false;
};

struct TaskGraph {
  std::vector<std::string> tasks;
  std::vector<ResidualEdge> edges;

  std::size_t task_index(const std::string& name) const;
  // Topological order; throws ConfigError on a cycle.
  std::vector<std::size_t> topo_order() const;
  // Structural checks: unique names, depth ranges, one incoming residual
  // source per depth, one incoming logit link, ESMM chain shape.
  void validate(std::size_t n_layers, ModelMode mode) const;
};

// Backbone shared by every task tower. Single-tower widths end in 1 (the
// logit); twin-tower widths end in the inner-product dimension and are used
// for both the user and the item half.
struct TowerSpec {
  std::vector<std::size_t> widths;
  bool twin = false;
  Activation hidden_act = Activation::kPRelu;
  double dropout = 0.0;
  // M3: min(residual logit, 0) before the addition.
  bool mandate = false;
  // Twin only: final-depth residual inside each half instead of a logit
  // addition after the inner product.
  bool residual_before_dot = false;

  std::size_t depth() const { return widths.size(); }
};

// Everything needed to rebuild a model deterministically; written into the
// checkpoint manifest.
struct ModelConfig {
  ModelMode mode = ModelMode::kResflow;
  TaskGraph graph;
  TowerSpec tower;
  RegSpec reg;
  std::size_t emb_dim = 8;
  std::vector<LossKind> loss;          // per task
  std::vector<double> task_weight;     // omega, per task
  std::vector<double> pos_weight;      // per task, negatives weigh 1
  std::vector<double> neg_weight;      // per task
  std::optional<std::vector<double>> ladder;  // progressive regression
  std::vector<std::string> user_fields;       // twin input split
  std::vector<std::string> item_fields;

  void validate() const;
};

class MultiTaskModel {
 public:
  // Registers all parameters (embeddings first, then towers in task order)
  // into `params`. Initialization draws from substreams derived from
  // `seed`, so declaration order does not perturb unrelated towers.
  MultiTaskModel(ParamStore& params, std::uint64_t seed,
                 const EmbeddingVocab& vocab, ModelConfig config);

  struct LinkRecord {
    std::size_t task = 0;
    std::size_t depth = 0;    // 1-based; depth == widths.size() is the logit
    bool logit = false;
    int half = -1;            // twin halves: 0 user, 1 item, -1 single
    ValueId src = 0;          // o of the previous task at this depth
    ValueId residual = 0;     // this tower's own block output (post-mandate)
    ValueId sum = 0;
  };

  struct Forward {
    ValueId input = 0;
    std::vector<ValueId> logits;         // per task
    std::vector<ValueId> predictions;    // sigmoid(logit), or logit for MSE
    // Raw (pre-mandate) residual logits of tasks with an incoming logit
    // link; pairs of (task, value).
    std::vector<std::pair<std::size_t, ValueId>> raw_residual_logits;
    std::vector<LinkRecord> links;
  };

  Forward forward(Tape& tape, const Dataset& data,
                  const std::vector<std::size_t>& rows, bool training,
                  Rng& dropout_rng) const;

  // Sum over tasks of omega_k * sum_i weighted per-sample loss, plus the
  // regularizer term. Labels come from the dataset's task-named label
  // columns (or the target column for MSE tasks).
  ValueId joint_loss(Tape& tape, const Forward& fwd, const Dataset& data,
                     const std::vector<std::size_t>& rows) const;

  // The M1/M2 penalty node for a recorded forward pass (zero constant for
  // none/M3).
  ValueId regularize(Tape& tape, const Forward& fwd) const;

  // Eval-mode predictions, one column per task, chunked internally.
  std::vector<std::vector<double>> predict(const Dataset& data) const;
  std::vector<std::vector<double>> predict(
      const Dataset& data, const std::vector<std::size_t>& rows) const;

  const ModelConfig& config() const { return config_; }
  const EmbeddingVocab& vocab() const { return *vocab_; }
  ParamStore& params() const { return *params_; }
  const EmbeddingLayer& embedding() const { return embedding_; }
  // Label column index feeding each task (-1 for MSE-on-target tasks).
  std::ptrdiff_t label_column(const Dataset& data, std::size_t task) const;

 private:
  struct Tower {            // single-tower: only `main`; twin: user + item
    Mlp main;
    Mlp item;
  };

  ValueId tower_logit(Tape& tape, std::size_t k, ValueId x_user,
                      ValueId x_item, bool training, Rng& rng,
                      std::vector<std::vector<ValueId>>& outputs_user,
                      std::vector<std::vector<ValueId>>& outputs_item,
                      std::vector<ValueId>& logits, Forward& fwd) const;

  ParamStore* params_;
  const EmbeddingVocab* vocab_;
  ModelConfig config_;
  EmbeddingLayer embedding_;
  std::vector<Tower> towers_;
  std::vector<std::size_t> topo_;
  std::vector<std::size_t> user_field_idx_, item_field_idx_;  // twin split
};

// Materializes progressive binary label columns ("ge_<v_k>") from the
// numeric target; returns the task names in ladder order.
std::vector<std::string> apply_ladder(Dataset& data,
                                      const std::vector<double>& ladder);
std::string ladder_task_name(double threshold);

// Per-link activation matrices for a batch of samples: the carried-over
// value o of the source task, this tower's own residual term, and their
// sum. Logit-linked entries have depth == widths.size() and 1-wide rows.
struct ActivationDump {
  struct Entry {
    std::string task;
    std::size_t depth = 0;
    bool logit = false;
    int half = -1;  // twin halves: 0 user, 1 item, -1 single
    Mat src, residual, sum;
  };
  std::vector<Entry> entries;
};

ActivationDump dump_activations(const MultiTaskModel& model,
                                const Dataset& data,
                                const std::vector<std::size_t>& rows);

}  // namespace resflow
