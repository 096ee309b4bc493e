#include "resflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "resflow/progressive.hpp"

namespace resflow {

ModelMode model_mode_from_string(const std::string& s) {
  if (s == "nse") return ModelMode::kNse;
  if (s == "esmm") return ModelMode::kEsmm;
  if (s == "resflow") return ModelMode::kResflow;
  throw ConfigError("unknown mode '" + s + "' (expected nse|esmm|resflow)");
}

std::string to_string(ModelMode m) {
  switch (m) {
    case ModelMode::kNse: return "nse";
    case ModelMode::kEsmm: return "esmm";
    case ModelMode::kResflow: return "resflow";
  }
  return "?";
}

Regularizer regularizer_from_string(const std::string& s) {
  if (s == "none") return Regularizer::kNone;
  if (s == "m1") return Regularizer::kM1;
  if (s == "m2") return Regularizer::kM2;
  if (s == "m3") return Regularizer::kM3;
  throw ConfigError("unknown regularizer '" + s + "' (expected none|m1|m2|m3)");
}

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::kNone: return "none";
    case Regularizer::kM1: return "m1";
    case Regularizer::kM2: return "m2";
    case Regularizer::kM3: return "m3";
  }
  return "?";
}

std::size_t TaskGraph::task_index(const std::string& name) const {
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (tasks[i] == name) return i;
  throw ConfigError("unknown task '" + name + "'");
}

std::vector<std::size_t> TaskGraph::topo_order() const {
  const std::size_t n = tasks.size();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<std::size_t>> out(n);
  for (const ResidualEdge& e : edges) {
    ++indeg[e.dst];
    out[e.src].push_back(e.dst);
  }
  std::vector<std::size_t> ready, order;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push_back(i);
  // Process in ascending task index for a stable order.
  std::set<std::size_t> frontier(ready.begin(), ready.end());
  while (!frontier.empty()) {
    const std::size_t k = *frontier.begin();
    frontier.erase(frontier.begin());
    order.push_back(k);
    for (std::size_t d : out[k])
      if (--indeg[d] == 0) frontier.insert(d);
  }
  if (order.size() != n) throw ConfigError("task graph has a cycle");
  return order;
}

void TaskGraph::validate(std::size_t n_layers, ModelMode mode) const {
  if (tasks.empty()) throw ConfigError("task graph needs at least one task");
  std::set<std::string> names(tasks.begin(), tasks.end());
  if (names.size() != tasks.size())
    throw ConfigError("duplicate task names in graph");
  std::vector<std::set<std::size_t>> depth_sources(tasks.size());
  std::vector<int> logit_in(tasks.size(), 0), chain_in(tasks.size(), 0);
  for (const ResidualEdge& e : edges) {
    if (e.src >= tasks.size() || e.dst >= tasks.size())
      throw ConfigError("edge references an unknown task");
    if (e.src == e.dst) throw ConfigError("self-edge on task '" + tasks[e.src] + "'");
    ++chain_in[e.dst];
    for (std::size_t l : e.layers) {
      if (l < 1 || l >= n_layers)
        throw ConfigError(
            "residual depth " + std::to_string(l) + " out of range (hidden "
            "depths are 1.." + std::to_string(n_layers - 1) +
            "; the final depth is the logit link)");
      if (!depth_sources[e.dst].insert(l).second)
        throw ConfigError("task '" + tasks[e.dst] +
                          "' has two residual sources at depth " +
                          std::to_string(l));
    }
    if (e.logit_link && ++logit_in[e.dst] > 1)
      throw ConfigError("task '" + tasks[e.dst] +
                        "' has two incoming logit links");
  }
  topo_order();  // throws on cycles
  if (mode == ModelMode::kEsmm) {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (chain_in[i] > 1)
        throw ConfigError("esmm needs a linear chain; task '" + tasks[i] +
                          "' has several predecessors");
    for (const ResidualEdge& e : edges)
      if (!e.layers.empty() || e.logit_link)
        throw ConfigError(
            "esmm chains probabilities only; residual links are not allowed");
  }
  if (mode == ModelMode::kNse && !edges.empty())
    throw ConfigError("nse has no inter-task links; remove the edges");
}

void ModelConfig::validate() const {
  const std::size_t n = graph.tasks.size();
  if (tower.widths.empty()) throw ConfigError("tower needs at least one layer");
  for (std::size_t w : tower.widths)
    if (w == 0) throw ConfigError("tower layer width must be positive");
  if (!tower.twin && tower.widths.back() != 1)
    throw ConfigError("single-tower widths must end in 1 (the logit)");
  if (tower.dropout < 0.0 || tower.dropout >= 1.0)
    throw ConfigError("dropout must be in [0, 1)");
  graph.validate(tower.depth(), mode);
  if (loss.size() != n || task_weight.size() != n || pos_weight.size() != n ||
      neg_weight.size() != n)
    throw ConfigError("per-task arrays must match the task count");
  for (double w : task_weight)
    if (w < 0.0) throw ConfigError("task weights must be >= 0");
  for (std::size_t k = 0; k < n; ++k)
    if (pos_weight[k] <= 0.0 || neg_weight[k] <= 0.0)
      throw ConfigError("sample weights must be positive");
  if (emb_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (mode == ModelMode::kEsmm)
    for (LossKind l : loss)
      if (l != LossKind::kBce)
        throw ConfigError("esmm supports cross-entropy tasks only");
  if (tower.residual_before_dot) {
    if (!tower.twin)
      throw ConfigError("residual placement before the dot product needs a "
                        "twin tower");
    if (tower.mandate || reg.kind == Regularizer::kM3)
      throw ConfigError("the non-positive residual mandate needs the logit "
                        "link after the dot product");
  }
  if (tower.twin && (user_fields.empty() || item_fields.empty()))
    throw ConfigError("twin tower needs user_fields and item_fields");
  if ((reg.kind == Regularizer::kM1 || reg.kind == Regularizer::kM2) &&
      reg.lambda < 0.0)
    throw ConfigError("regularizer lambda must be >= 0");
  if (reg.kind == Regularizer::kM1 || reg.kind == Regularizer::kM2) {
    if (mode == ModelMode::kNse || graph.edges.empty())
      throw ConfigError(to_string(reg.kind) +
                        " needs a task chain; nse has none");
    if (reg.kind == Regularizer::kM2) {
      bool any_logit = false;
      for (const ResidualEdge& e : graph.edges) any_logit |= e.logit_link;
      if (!any_logit)
        throw ConfigError("m2 penalizes residual logits; add a logit link");
    }
  }
}

MultiTaskModel::MultiTaskModel(ParamStore& params, std::uint64_t seed,
                               const EmbeddingVocab& vocab, ModelConfig config)
    : params_(&params), vocab_(&vocab), config_(std::move(config)) {
  // M3 is enforced structurally inside forward.
  if (config_.reg.kind == Regularizer::kM3) config_.tower.mandate = true;
  config_.validate();
  if (!vocab.frozen()) throw UsageError("model needs a frozen vocabulary");

  Rng emb_rng(Rng::derive(seed, "init.embedding"));
  embedding_ = make_embedding(params, emb_rng, vocab, config_.emb_dim);

  const std::size_t n_fields =
      config_.tower.twin ? config_.user_fields.size() : vocab.field_count();
  std::size_t user_in = 0, item_in = 0, single_in = 0;
  if (config_.tower.twin) {
    auto resolve = [&](const std::vector<std::string>& names,
                       std::vector<std::size_t>& out) {
      for (const std::string& n : names) {
        bool found = false;
        for (std::size_t f = 0; f < vocab.field_count(); ++f)
          if (vocab.field(f).name == n) {
            out.push_back(f);
            found = true;
            break;
          }
        if (!found) throw ConfigError("unknown field '" + n + "' in tower split");
      }
    };
    resolve(config_.user_fields, user_field_idx_);
    resolve(config_.item_fields, item_field_idx_);
    user_in = user_field_idx_.size() * config_.emb_dim;
    item_in = item_field_idx_.size() * config_.emb_dim;
  } else {
    single_in = n_fields * config_.emb_dim;
  }

  for (std::size_t k = 0; k < config_.graph.tasks.size(); ++k) {
    const std::string& task = config_.graph.tasks[k];
    Tower tower;
    if (config_.tower.twin) {
      Rng u_rng(Rng::derive(seed, "init.tower." + task + ".user"));
      Rng i_rng(Rng::derive(seed, "init.tower." + task + ".item"));
      tower.main = make_mlp(params, u_rng, "tower." + task + ".user", user_in,
                            config_.tower.widths, config_.tower.hidden_act,
                            config_.tower.dropout);
      tower.item = make_mlp(params, i_rng, "tower." + task + ".item", item_in,
                            config_.tower.widths, config_.tower.hidden_act,
                            config_.tower.dropout);
    } else {
      Rng t_rng(Rng::derive(seed, "init.tower." + task));
      tower.main = make_mlp(params, t_rng, "tower." + task, single_in,
                            config_.tower.widths, config_.tower.hidden_act,
                            config_.tower.dropout);
    }
    towers_.push_back(std::move(tower));
  }
  topo_ = config_.graph.topo_order();
}

namespace {
// One incoming source per relation, precomputed as dst -> src (or npos).
constexpr std::size_t kNone = static_cast<std::size_t>(-1);
}  // namespace

MultiTaskModel::Forward MultiTaskModel::forward(
    Tape& tape, const Dataset& data, const std::vector<std::size_t>& rows,
    bool training, Rng& dropout_rng) const {
  const std::size_t n_tasks = config_.graph.tasks.size();
  const std::size_t depth = config_.tower.depth();

  std::vector<std::vector<std::size_t>> feat_src(
      n_tasks, std::vector<std::size_t>(depth + 1, kNone));
  std::vector<std::size_t> logit_src(n_tasks, kNone), chain_src(n_tasks, kNone);
  for (const ResidualEdge& e : config_.graph.edges) {
    chain_src[e.dst] = e.src;
    for (std::size_t l : e.layers) feat_src[e.dst][l] = e.src;
    if (e.logit_link) logit_src[e.dst] = e.src;
  }

  Forward fwd;
  fwd.logits.assign(n_tasks, 0);
  fwd.predictions.assign(n_tasks, 0);

  std::vector<std::vector<ValueId>> out_user(n_tasks), out_item(n_tasks);
  ValueId x_user = 0, x_item = 0;
  if (config_.tower.twin) {
    x_user = embed_batch(tape, embedding_, *vocab_, data, rows, &user_field_idx_);
    x_item = embed_batch(tape, embedding_, *vocab_, data, rows, &item_field_idx_);
    fwd.input = x_user;
  } else {
    fwd.input = embed_batch(tape, embedding_, *vocab_, data, rows);
  }

  std::vector<ValueId> own_logits(n_tasks, 0);
  for (std::size_t k : topo_) {
    if (config_.tower.twin) {
      tower_logit(tape, k, x_user, x_item, training, dropout_rng, out_user,
                  out_item, own_logits, fwd);
    } else {
      ValueId cur = fwd.input;
      out_user[k].assign(depth + 1, 0);
      for (std::size_t l = 1; l <= depth; ++l) {
        ValueId f = dense_forward(tape, towers_[k].main.layers[l - 1], cur,
                                  training, dropout_rng);
        if (l == depth) {
          own_logits[k] = f;
          break;
        }
        const std::size_t src = feat_src[k][l];
        ValueId o = f;
        if (src != kNone && config_.mode == ModelMode::kResflow) {
          o = tape.add(out_user[src][l], f);
          fwd.links.push_back(LinkRecord{k, l, false, -1, out_user[src][l], f, o});
        }
        out_user[k][l] = o;
        cur = o;
      }
    }

    // Logit assembly (single-tower path; the twin path did it already).
    if (!config_.tower.twin) {
      const std::size_t src = logit_src[k];
      if (src != kNone && config_.mode == ModelMode::kResflow) {
        ValueId r = own_logits[k];
        fwd.raw_residual_logits.emplace_back(k, r);
        if (config_.tower.mandate) r = tape.min_zero(r);
        const ValueId sum = tape.add(fwd.logits[src], r);
        fwd.links.push_back(
            LinkRecord{k, depth, true, -1, fwd.logits[src], r, sum});
        fwd.logits[k] = sum;
      } else {
        fwd.logits[k] = own_logits[k];
      }
    }

    // Probability head.
    if (config_.loss[k] == LossKind::kMse) {
      fwd.predictions[k] = fwd.logits[k];
    } else if (config_.mode == ModelMode::kEsmm) {
      ValueId stage = tape.clamp(tape.sigmoid(fwd.logits[k]), Tape::kProbFloor,
                                 1.0 - Tape::kProbFloor);
      fwd.predictions[k] = chain_src[k] == kNone
                               ? stage
                               : tape.mul(fwd.predictions[chain_src[k]], stage);
    } else {
      fwd.predictions[k] = tape.sigmoid(fwd.logits[k]);
    }
  }
  return fwd;
}

ValueId MultiTaskModel::tower_logit(
    Tape& tape, std::size_t k, ValueId x_user, ValueId x_item, bool training,
    Rng& rng, std::vector<std::vector<ValueId>>& out_user,
    std::vector<std::vector<ValueId>>& out_item, std::vector<ValueId>& logits,
    Forward& fwd) const {
  const std::size_t depth = config_.tower.depth();
  std::vector<std::size_t> feat_src(depth + 1, kNone);
  std::size_t logit_from = kNone;
  for (const ResidualEdge& e : config_.graph.edges) {
    if (e.dst != k) continue;
    for (std::size_t l : e.layers) feat_src[l] = e.src;
    if (e.logit_link) logit_from = e.src;
  }
  const bool link_active = config_.mode == ModelMode::kResflow;

  auto run_half = [&](const Mlp& mlp, ValueId x, int half,
                      std::vector<std::vector<ValueId>>& outs) {
    ValueId cur = x;
    outs[k].assign(depth + 1, 0);
    for (std::size_t l = 1; l <= depth; ++l) {
      ValueId f = dense_forward(tape, mlp.layers[l - 1], cur, training, rng);
      ValueId o = f;
      const bool final_residual = l == depth && logit_from != kNone &&
                                  config_.tower.residual_before_dot;
      const std::size_t src =
          l < depth ? feat_src[l] : (final_residual ? logit_from : kNone);
      if (src != kNone && link_active) {
        o = tape.add(outs[src][l], f);
        fwd.links.push_back(
            LinkRecord{k, l, false, half, outs[src][l], f, o});
      }
      outs[k][l] = o;
      cur = o;
    }
    return outs[k][depth];
  };

  ValueId u = run_half(towers_[k].main, x_user, 0, out_user);
  ValueId it = run_half(towers_[k].item, x_item, 1, out_item);
  ValueId own = tape.row_dot(u, it);
  if (logit_from != kNone && link_active && !config_.tower.residual_before_dot) {
    ValueId r = own;
    fwd.raw_residual_logits.emplace_back(k, r);
    if (config_.tower.mandate) r = tape.min_zero(r);
    const ValueId sum = tape.add(logits[logit_from], r);
    fwd.links.push_back(
        LinkRecord{k, depth, true, -1, logits[logit_from], r, sum});
    logits[k] = sum;
  } else {
    logits[k] = own;
  }
  fwd.logits[k] = logits[k];
  return logits[k];
}

std::ptrdiff_t MultiTaskModel::label_column(const Dataset& data,
                                            std::size_t task) const {
  if (config_.loss[task] == LossKind::kMse) return -1;
  const auto& cols = data.schema.label_columns;
  auto it = std::find(cols.begin(), cols.end(), config_.graph.tasks[task]);
  return it == cols.end() ? -1 : it - cols.begin();
}

ValueId MultiTaskModel::joint_loss(Tape& tape, const Forward& fwd,
                                   const Dataset& data,
                                   const std::vector<std::size_t>& rows) const {
  const std::size_t n_tasks = config_.graph.tasks.size();
  ValueId acc = kNone;
  for (std::size_t k = 0; k < n_tasks; ++k) {
    const double omega = config_.task_weight[k];
    if (omega == 0.0) continue;
    ValueId per_sample;
    if (config_.loss[k] == LossKind::kMse) {
      if (data.target.empty())
        throw DataError("task '" + config_.graph.tasks[k] +
                        "' trains on the numeric target, which is missing");
      Mat t(rows.size(), 1);
      for (std::size_t i = 0; i < rows.size(); ++i)
        t(i, 0) = data.target[rows[i]];
      per_sample = tape.squared_error(fwd.predictions[k], t);
    } else {
      const std::ptrdiff_t col = label_column(data, k);
      if (col < 0)
        throw DataError("no label column for task '" + config_.graph.tasks[k] +
                        "'");
      Mat y(rows.size(), 1), w(rows.size(), 1);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const double yi = data.labels[col][rows[i]];
        y(i, 0) = yi;
        w(i, 0) = yi == 1.0 ? config_.pos_weight[k] : config_.neg_weight[k];
      }
      per_sample = tape.bce(fwd.predictions[k], y, w);
    }
    ValueId s = tape.sum(per_sample);
    if (omega != 1.0) s = tape.scale(s, omega);
    acc = acc == kNone ? s : tape.add(acc, s);
  }
  if (acc == kNone) throw ConfigError("all task weights are zero");
  if (config_.reg.kind == Regularizer::kM1 ||
      config_.reg.kind == Regularizer::kM2)
    acc = tape.add(acc, regularize(tape, fwd));
  return acc;
}

ValueId MultiTaskModel::regularize(Tape& tape, const Forward& fwd) const {
  switch (config_.reg.kind) {
    case Regularizer::kNone:
    case Regularizer::kM3:
      return tape.constant(Mat(1, 1));
    case Regularizer::kM1: {
      ValueId acc = kNone;
      for (const ResidualEdge& e : config_.graph.edges) {
        ValueId d = tape.sub(fwd.predictions[e.dst], fwd.predictions[e.src]);
        ValueId s = tape.sum(tape.positive_part(d));
        acc = acc == kNone ? s : tape.add(acc, s);
      }
      return tape.scale(acc, config_.reg.lambda);
    }
    case Regularizer::kM2: {
      if (fwd.raw_residual_logits.empty())
        throw ConfigError("m2 penalizes residual logits; none were recorded");
      ValueId acc = kNone;
      for (const auto& [task, r] : fwd.raw_residual_logits) {
        ValueId s = tape.sum(tape.positive_part(r));
        acc = acc == kNone ? s : tape.add(acc, s);
      }
      return tape.scale(acc, config_.reg.lambda);
    }
  }
  return tape.constant(Mat(1, 1));
}

std::vector<std::vector<double>> MultiTaskModel::predict(
    const Dataset& data) const {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return predict(data, rows);
}

std::vector<std::vector<double>> MultiTaskModel::predict(
    const Dataset& data, const std::vector<std::size_t>& rows) const {
  const std::size_t n_tasks = config_.graph.tasks.size();
  std::vector<std::vector<double>> out(n_tasks);
  for (auto& v : out) v.reserve(rows.size());
  Rng unused(1);  // dropout is inactive in eval mode
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::size_t end = std::min(rows.size(), start + kChunk);
    std::vector<std::size_t> chunk(rows.begin() + start, rows.begin() + end);
    Tape tape(*params_);
    Forward fwd = forward(tape, data, chunk, false, unused);
    for (std::size_t k = 0; k < n_tasks; ++k) {
      const Mat& p = tape.value(fwd.predictions[k]);
      for (std::size_t i = 0; i < p.rows(); ++i) out[k].push_back(p(i, 0));
    }
  }
  return out;
}

std::string ladder_task_name(double threshold) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", threshold);
  return std::string("ge_") + buf;
}

ActivationDump dump_activations(const MultiTaskModel& model,
                                const Dataset& data,
                                const std::vector<std::size_t>& rows) {
  Tape tape(model.params());
  Rng rng(0);  // unused: eval mode skips dropout
  const auto fwd = model.forward(tape, data, rows, false, rng);
  ActivationDump dump;
  for (const auto& link : fwd.links) {
    ActivationDump::Entry e;
    e.task = model.config().graph.tasks[link.task];
    e.depth = link.depth;
    e.logit = link.logit;
    e.half = link.half;
    e.src = tape.value(link.src);
    e.residual = tape.value(link.residual);
    e.sum = tape.value(link.sum);
    dump.entries.push_back(std::move(e));
  }
  return dump;
}

std::vector<std::string> apply_ladder(Dataset& data,
                                      const std::vector<double>& ladder) {
  ThresholdLadder lad(ladder);
  if (data.target.empty())
    throw DataError("progressive labels need a numeric target column");
  std::vector<std::string> names;
  for (std::size_t k = 1; k <= lad.tasks(); ++k) {
    const std::string name = ladder_task_name(lad.v(k));
    const auto& cols = data.schema.label_columns;
    if (std::find(cols.begin(), cols.end(), name) != cols.end())
      throw UsageError("label column '" + name + "' already exists");
    std::vector<double> col(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double v = std::clamp(data.target[i], lad.min(), lad.max());
      col[i] = lad.v(k) <= v ? 1.0 : 0.0;
    }
    data.schema.label_columns.push_back(name);
    data.labels.push_back(std::move(col));
    names.push_back(name);
  }
  return names;
}

}  // namespace resflow
