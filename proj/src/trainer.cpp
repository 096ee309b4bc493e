#include "resflow/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "resflow/progressive.hpp"

namespace resflow {

TrainResult train(MultiTaskModel& model, Adam& optimizer, const Dataset& data,
                  const TrainOptions& opts) {
  if (opts.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t n = data.size();
  if (n == 0) throw DataError("training set is empty");

  Rng shuffle_rng(Rng::derive(opts.seed, "train.shuffle"));
  Rng dropout_rng(Rng::derive(opts.seed, "train.dropout"));
  ParamStore& params = model.params();

  TrainResult result;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t end = std::min(n, start + opts.batch_size);
      std::vector<std::size_t> batch(order.begin() + start,
                                     order.begin() + end);
      params.zero_grad();
      Tape tape(params);
      auto fwd = model.forward(tape, data, batch, true, dropout_rng);
      ValueId total = model.joint_loss(tape, fwd, data, batch);
      ValueId mean =
          tape.scale(total, 1.0 / static_cast<double>(batch.size()));
      const double loss_value = tape.value(mean)(0, 0);
      if (!std::isfinite(loss_value)) {
        // Name the first task whose head went non-finite.
        std::string task = "?";
        for (std::size_t k = 0; k < model.config().graph.tasks.size(); ++k) {
          const Mat& p = tape.value(fwd.predictions[k]);
          for (double v : p.raw())
            if (!std::isfinite(v)) {
              task = model.config().graph.tasks[k];
              break;
            }
          if (task != "?") break;
        }
        throw NumericError("non-finite loss at batch " +
                           std::to_string(result.steps) + " (task " + task +
                           ")");
      }
      tape.backward(mean);
      optimizer.step();
      result.loss_trace.push_back(loss_value);
      ++result.steps;
    }
  }
  return result;
}

namespace {
bool has_both_classes(const std::vector<double>& labels) {
  bool pos = false, neg = false;
  for (double l : labels) {
    pos |= l == 1.0;
    neg |= l == 0.0;
  }
  return pos && neg;
}
}  // namespace

MetricReport evaluate_model(const MultiTaskModel& model, const Dataset& data,
                            const EvalOptions& opts) {
  if (data.size() == 0) throw DataError("evaluation set is empty");
  const ModelConfig& cfg = model.config();
  const auto preds = model.predict(data);
  MetricReport rep;

  for (std::size_t k = 0; k < cfg.graph.tasks.size(); ++k) {
    const std::string& task = cfg.graph.tasks[k];
    if (cfg.loss[k] == LossKind::kMse) {
      rep.values["mse." + task] = regression_mse(preds[k], data.target);
      continue;
    }
    const std::ptrdiff_t col = model.label_column(data, k);
    if (col < 0) continue;
    if (has_both_classes(data.labels[col]))
      rep.values["auc." + task] = auc(preds[k], data.labels[col]);
  }

  if (cfg.ladder) {
    ThresholdLadder lad(*cfg.ladder);
    if (data.target.empty())
      throw DataError("progressive evaluation needs the numeric target");
    std::vector<double> decoded(data.size());
    std::vector<double> q(lad.tasks());
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t k = 0; k < lad.tasks(); ++k)
        q[k] = std::clamp(preds[k][i], 0.0, 1.0);
      decoded[i] = decode_expectation(q, lad);
    }
    rep.values["mse"] = regression_mse(decoded, data.target);
  } else if (cfg.graph.tasks.size() == 1 && cfg.loss[0] == LossKind::kMse) {
    rep.values["mse"] = rep.values["mse." + cfg.graph.tasks[0]];
  }

  if (data.schema.has_lists()) {
    std::size_t rank_task = cfg.graph.tasks.size() - 1;
    if (!opts.ranking_task.empty())
      rank_task = cfg.graph.task_index(opts.ranking_task);
    const auto lists = build_ranked_lists(data, preds[rank_task]);
    for (std::size_t k : opts.ks) {
      double wr[4] = {0, 0, 0, 0};
      double rec = 0.0;
      std::size_t wr_used = 0, rec_used = 0;
      for (const RankedList& l : lists) {
        try {
          const double id = weighted_recall_at_k(l, k, WrVariant::kIdentity);
          wr[0] += id;
          wr[1] += weighted_recall_at_k(l, k, WrVariant::kLog);
          wr[2] += weighted_recall_at_k(l, k, WrVariant::kSqrt);
          wr[3] += weighted_recall_at_k(l, k, WrVariant::kSquare);
          ++wr_used;
        } catch (const UndefinedMetricError&) {
        }
        try {
          rec += recall_at_k(l, k, FunnelLabel::kOrder);
          ++rec_used;
        } catch (const UndefinedMetricError&) {
        }
      }
      const std::string suffix = "@" + std::to_string(k);
      if (wr_used > 0) {
        rep.values["wr" + suffix] = wr[0] / wr_used;
        rep.values["wr_log" + suffix] = wr[1] / wr_used;
        rep.values["wr_sqrt" + suffix] = wr[2] / wr_used;
        rep.values["wr_square" + suffix] = wr[3] / wr_used;
      }
      if (rec_used > 0) rep.values["recall" + suffix] = rec / rec_used;
    }
    double nd = 0.0;
    std::size_t nd_used = 0;
    for (const RankedList& l : lists) {
      try {
        nd += ndcg(l);
        ++nd_used;
      } catch (const UndefinedMetricError&) {
      }
    }
    if (nd_used > 0) rep.values["ndcg"] = nd / nd_used;
    try {
      rep.values["list_auc"] = list_auc(lists);
    } catch (const UndefinedMetricError&) {
    }
  }
  return rep;
}

void quantize_params(ParamStore& params) {
  for (ParamId pid = 0; pid < params.count(); ++pid)
    for (double& v : params.value(pid).raw())
      v = static_cast<double>(static_cast<float>(v));
}

}  // namespace resflow
