#include "resflow/selfcheck.hpp"

#include <string>
#include <vector>

#include "resflow/model.hpp"

namespace resflow {

namespace {

Dataset tiny_dataset(Rng& rng, std::size_t n_tasks, bool with_target,
                     std::size_t rows) {
  Dataset d;
  d.schema.fields = {FieldSpec{"u", false, false}, FieldSpec{"g", true, false},
                     FieldSpec{"it", false, false}};
  d.fields.resize(3);
  for (std::size_t i = 0; i < rows; ++i) {
    d.fields[0].single.push_back(rng.uniform() < 0.15
                                     ? kMissingId
                                     : static_cast<std::int64_t>(
                                           rng.uniform_int(4)));
    std::vector<std::int64_t> tags;
    for (std::int64_t t = 0; t < 3; ++t)
      if (rng.uniform() < 0.4) tags.push_back(t);
    d.fields[1].multi.push_back(std::move(tags));
    d.fields[2].single.push_back(static_cast<std::int64_t>(rng.uniform_int(5)));
  }
  for (std::size_t k = 0; k < n_tasks; ++k) {
    d.schema.label_columns.push_back("t" + std::to_string(k));
    std::vector<double> col(rows);
    for (auto& v : col) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    d.labels.push_back(std::move(col));
  }
  if (with_target) {
    d.schema.target_column = "score";
    d.target.resize(rows);
    for (auto& v : d.target) v = 0.5 * rng.normal();
  }
  return d;
}

std::string describe(std::size_t i, const ModelConfig& mc) {
  std::string s = "instance " + std::to_string(i) + " (" + to_string(mc.mode) +
                  ", " + std::to_string(mc.graph.tasks.size()) + " tasks";
  if (mc.tower.twin) s += ", twin";
  if (mc.tower.residual_before_dot) s += ", before-dot";
  if (mc.reg.kind != Regularizer::kNone) s += ", " + to_string(mc.reg.kind);
  if (mc.tower.dropout > 0.0) s += ", dropout";
  s += ")";
  return s;
}

}  // namespace

SelfCheckSummary run_gradcheck_suite(
    std::uint64_t seed, std::size_t instances,
    const std::function<void(ParamStore&)>& tamper) {
  SelfCheckSummary out;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::string tag = std::to_string(i);
    Rng rng(Rng::derive(seed, "selfcheck." + tag));

    ModelConfig mc;
    mc.mode = i % 3 == 0 ? ModelMode::kResflow
                         : (i % 3 == 1 ? ModelMode::kNse : ModelMode::kEsmm);
    const std::size_t n_tasks = 2 + (i % 2);
    for (std::size_t k = 0; k < n_tasks; ++k)
      mc.graph.tasks.push_back("t" + std::to_string(k));

    mc.tower.twin = i % 4 == 3;
    if (mc.tower.twin) {
      mc.tower.widths = {3 + rng.uniform_int(2), 2 + rng.uniform_int(2)};
      mc.user_fields = {"u", "g"};
      mc.item_fields = {"it"};
    } else if (i % 7 == 5) {
      mc.tower.widths = {4, 1};
    } else {
      mc.tower.widths = {3 + rng.uniform_int(3), 2 + rng.uniform_int(2), 1};
    }
    mc.tower.hidden_act = Activation::kPRelu;
    mc.tower.dropout = i % 5 == 2 ? 0.25 : 0.0;

    if (mc.mode != ModelMode::kNse) {
      for (std::size_t k = 1; k < n_tasks; ++k) {
        ResidualEdge e{k - 1, k, {}, false};
        if (mc.mode == ModelMode::kResflow) {
          for (std::size_t l = 1; l < mc.tower.depth(); ++l)
            e.layers.push_back(l);
          e.logit_link = true;
        }
        mc.graph.edges.push_back(e);
      }
    }
    if (mc.mode == ModelMode::kResflow) {
      switch (i % 4) {
        case 0: mc.reg = {Regularizer::kM3, 0.0}; break;
        case 1: mc.reg = {Regularizer::kM1, 0.37}; break;
        case 2: mc.reg = {Regularizer::kM2, 0.37}; break;
        default: mc.reg = {Regularizer::kNone, 0.0}; break;
      }
      if (mc.reg.kind == Regularizer::kM3) mc.tower.mandate = true;
      if (mc.tower.twin && !mc.tower.mandate && i % 2 == 1)
        mc.tower.residual_before_dot = true;
    }

    mc.emb_dim = 2 + rng.uniform_int(2);
    mc.loss.assign(n_tasks, LossKind::kBce);
    const bool with_target = mc.mode != ModelMode::kEsmm && i % 6 == 1;
    if (with_target) mc.loss[0] = LossKind::kMse;
    mc.task_weight.assign(n_tasks, 1.0);
    if (i % 9 == 4) mc.task_weight[n_tasks - 1] = 2.0;
    mc.pos_weight.assign(n_tasks, 1.0);
    mc.neg_weight.assign(n_tasks, 1.0);
    mc.pos_weight[0] = 1.0 + (i % 3);
    if (i % 3 == 0) mc.neg_weight[0] = 0.5;
    mc.validate();

    const std::size_t rows_n = 4 + rng.uniform_int(3);
    Dataset data = tiny_dataset(rng, n_tasks, with_target, rows_n);
    EmbeddingVocab vocab(data.schema.fields, 1);
    vocab.observe(data);
    vocab.freeze();

    ParamStore params;
    MultiTaskModel model(params, Rng::derive(seed, "model." + tag), vocab, mc);

    // Fresh models park every PReLU argument of rows zeroed by the first
    // layer exactly on the kink (biases and slopes start at zero), where
    // one-sided derivatives differ and finite differences are meaningless.
    // Jitter to a generic point before checking.
    Rng jitter(Rng::derive(seed, "jitter." + tag));
    for (ParamId pid = 0; pid < params.count(); ++pid)
      for (double& v : params.value(pid).raw())
        v += 0.05 * (2.0 * jitter.uniform() - 1.0);

    std::vector<std::size_t> rows(rows_n);
    for (std::size_t r = 0; r < rows_n; ++r) rows[r] = r;

    const auto loss_fn = [&](bool with_grad) {
      params.zero_grad();
      Tape tape(params);
      // Re-seeded per call so dropout masks agree across FD evaluations.
      Rng drop(Rng::derive(seed, "drop." + tag));
      const auto fwd = model.forward(tape, data, rows, true, drop);
      const ValueId loss = model.joint_loss(tape, fwd, data, rows);
      if (with_grad) tape.backward(loss);
      return tape.value(loss)(0, 0);
    };

    Rng coords(Rng::derive(seed, "coords." + tag));
    // h = 1e-5: small enough that a stray pre-activation within h of a
    // PReLU kink (which the jitter cannot rule out) stays far below the
    // tolerance, while central-difference roundoff is still ~1e-11.
    const GradCheckReport rep =
        check_gradients(params, loss_fn, 1e-5, 1e-4, 6, &coords, tamper);

    ++out.instances;
    if (!rep.ok) ++out.failures;
    if (rep.max_rel_err > out.worst_rel_err) {
      out.worst_rel_err = rep.max_rel_err;
      out.worst_param = rep.worst_param;
      out.worst_instance = describe(i, mc);
    }
  }
  return out;
}

}  // namespace resflow
