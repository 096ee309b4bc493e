#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "resflow/trainer.hpp"

using namespace resflow;

namespace {

Dataset funnel_sample(std::uint64_t seed = 3) {
  FunnelConfig cfg;
  cfg.n_lists = 80;
  cfg.list_size = 25;
  cfg.n_users = 200;
  cfg.n_items = 150;
  return generate_funnel(seed, cfg);
}

ModelConfig funnel_model(ModelMode mode) {
  ModelConfig mc;
  mc.mode = mode;
  mc.graph.tasks = {"click", "atc", "order"};
  if (mode != ModelMode::kNse)
    for (std::size_t k = 1; k < 3; ++k) {
      ResidualEdge e;
      e.src = k - 1;
      e.dst = k;
      if (mode == ModelMode::kResflow) {
        e.layers = {1};
        e.logit_link = true;
      }
      mc.graph.edges.push_back(e);
    }
  mc.tower.widths = {6, 1};
  mc.emb_dim = 4;
  mc.loss.assign(3, LossKind::kBce);
  mc.task_weight.assign(3, 1.0);
  mc.pos_weight.assign(3, 1.0);
  mc.neg_weight.assign(3, 1.0);
  return mc;
}

EmbeddingVocab observe(const Dataset& d) {
  EmbeddingVocab vocab(d.schema.fields, 0);
  vocab.observe(d);
  vocab.freeze();
  return vocab;
}

}  // namespace

TEST_CASE("zero epochs trains nothing") {
  const Dataset d = funnel_sample();
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 5, vocab, funnel_model(ModelMode::kResflow));
  std::vector<double> before;
  for (ParamId id = 0; id < params.count(); ++id)
    for (const double v : params.value(id).raw()) before.push_back(v);
  TrainOptions opts;
  opts.epochs = 0;
  Adam adam(params, opts.adam);
  const TrainResult res = train(model, adam, d, opts);
  CHECK(res.steps == 0);
  CHECK(res.loss_trace.empty());
  std::vector<double> after;
  for (ParamId id = 0; id < params.count(); ++id)
    for (const double v : params.value(id).raw()) after.push_back(v);
  CHECK(before == after);
}

TEST_CASE("one epoch lowers the running loss") {
  const Dataset d = funnel_sample();
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 5, vocab, funnel_model(ModelMode::kResflow));
  TrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 100;
  Adam adam(params, opts.adam);
  const TrainResult res = train(model, adam, d, opts);
  REQUIRE(res.steps == 20);
  REQUIRE(res.loss_trace.size() == 20);
  const double head = std::accumulate(res.loss_trace.begin(),
                                      res.loss_trace.begin() + 5, 0.0) / 5.0;
  const double tail = std::accumulate(res.loss_trace.end() - 5,
                                      res.loss_trace.end(), 0.0) / 5.0;
  CHECK(tail < head);
  for (const double v : res.loss_trace) CHECK(std::isfinite(v));
}

TEST_CASE("a fixed seed reproduces the loss trace bit for bit") {
  const Dataset d = funnel_sample();
  const EmbeddingVocab vocab = observe(d);
  TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 128;
  opts.seed = 911;
  std::vector<double> traces[2];
  for (int run = 0; run < 2; ++run) {
    ParamStore params;
    MultiTaskModel model(params, opts.seed, vocab, funnel_model(ModelMode::kResflow));
    Adam adam(params, opts.adam);
    traces[run] = train(model, adam, d, opts).loss_trace;
  }
  CHECK(traces[0] == traces[1]);
}

TEST_CASE("different seeds shuffle differently") {
  const Dataset d = funnel_sample();
  const EmbeddingVocab vocab = observe(d);
  TrainOptions a, b;
  a.epochs = b.epochs = 1;
  a.seed = 1;
  b.seed = 2;
  std::vector<double> ta, tb;
  {
    ParamStore params;
    MultiTaskModel model(params, a.seed, vocab, funnel_model(ModelMode::kResflow));
    Adam adam(params, a.adam);
    ta = train(model, adam, d, a).loss_trace;
  }
  {
    ParamStore params;
    MultiTaskModel model(params, b.seed, vocab, funnel_model(ModelMode::kResflow));
    Adam adam(params, b.adam);
    tb = train(model, adam, d, b).loss_trace;
  }
  CHECK(ta != tb);
}

TEST_CASE("diverging training aborts with a numerical error") {
  Dataset d;
  d.schema.fields = {FieldSpec{"u", false, false}};
  d.fields.resize(1);
  Rng rng(4);
  for (int i = 0; i < 64; ++i)
    d.fields[0].single.push_back(static_cast<std::int64_t>(rng.uniform_int(8)));
  d.schema.target_column = "y";
  d.target.assign(64, 0.25);
  ModelConfig mc;
  mc.mode = ModelMode::kNse;
  mc.graph.tasks = {"reg"};
  mc.tower.widths = {4, 1};
  mc.emb_dim = 4;
  mc.loss = {LossKind::kMse};
  mc.task_weight = {1.0};
  mc.pos_weight = {1.0};
  mc.neg_weight = {1.0};
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 5, vocab, mc);
  TrainOptions opts;
  opts.epochs = 4;
  opts.batch_size = 64;
  opts.adam.lr = 1e200;  // one step overflows the squared error
  Adam adam(params, opts.adam);
  CHECK_THROWS_AS(train(model, adam, d, opts), NumericError);
}

TEST_CASE("evaluation reports task and list metrics") {
  const Dataset d = funnel_sample();
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 5, vocab, funnel_model(ModelMode::kResflow));
  TrainOptions opts;
  opts.epochs = 1;
  Adam adam(params, opts.adam);
  train(model, adam, d, opts);
  EvalOptions eval;
  eval.ks = {5, 10};
  eval.ranking_task = "order";
  const MetricReport rep = evaluate_model(model, d, eval);
  for (const char* key :
       {"auc.click", "auc.atc", "auc.order", "wr@5", "wr_log@5", "wr_sqrt@5",
        "wr_square@5", "recall@5", "wr@10", "ndcg", "list_auc"}) {
    INFO(key);
    CHECK(rep.values.count(key) == 1);
  }
  for (const auto& [k, v] : rep.values) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("evaluation without lists omits the ranking block") {
  Dataset d = funnel_sample();
  d.schema.list_id_column.clear();
  d.list_id.clear();
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 5, vocab, funnel_model(ModelMode::kNse));
  const MetricReport rep = evaluate_model(model, d);
  CHECK(rep.values.count("auc.click") == 1);
  CHECK(rep.values.count("wr@10") == 0);
  CHECK(rep.values.count("ndcg") == 0);
  CHECK(rep.values.count("list_auc") == 0);
}

TEST_CASE("an untrained model scores near chance") {
  const Dataset d = funnel_sample(29);
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 41, vocab, funnel_model(ModelMode::kResflow));
  const MetricReport rep = evaluate_model(model, d);
  CHECK(rep.values.at("auc.click") > 0.4);
  CHECK(rep.values.at("auc.click") < 0.6);
}

TEST_CASE("progressive models report the decoded-expectation mse") {
  Dataset d;
  d.schema.fields = {FieldSpec{"u", false, false}, FieldSpec{"m", false, false}};
  d.fields.resize(2);
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    d.fields[0].single.push_back(static_cast<std::int64_t>(rng.uniform_int(20)));
    d.fields[1].single.push_back(static_cast<std::int64_t>(rng.uniform_int(30)));
  }
  d.schema.target_column = "rating";
  d.target.resize(200);
  for (auto& v : d.target) v = 1.0 + static_cast<double>(rng.uniform_int(5));
  const std::vector<double> ladder = {1, 2, 3, 4, 5};
  const auto tasks = apply_ladder(d, ladder);
  ModelConfig mc;
  mc.mode = ModelMode::kResflow;
  mc.graph.tasks = tasks;
  for (std::size_t k = 1; k < tasks.size(); ++k) {
    ResidualEdge e;
    e.src = k - 1;
    e.dst = k;
    e.layers = {1};
    e.logit_link = true;
    mc.graph.edges.push_back(e);
  }
  mc.tower.widths = {8, 1};
  mc.emb_dim = 4;
  mc.loss.assign(tasks.size(), LossKind::kBce);
  mc.task_weight.assign(tasks.size(), 1.0);
  mc.pos_weight.assign(tasks.size(), 1.0);
  mc.neg_weight.assign(tasks.size(), 1.0);
  mc.ladder = ladder;
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 7, vocab, mc);
  TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 50;
  Adam adam(params, opts.adam);
  train(model, adam, d, opts);
  const MetricReport rep = evaluate_model(model, d);
  REQUIRE(rep.values.count("mse") == 1);
  // Decoded expectations live in [1, 5], so the mse is bounded by 16.
  CHECK(rep.values.at("mse") < 16.0);
  CHECK(rep.values.count("auc.ge_2") == 1);
}

TEST_CASE("quantization is idempotent and matches float32 rounding") {
  const Dataset d = funnel_sample();
  const EmbeddingVocab vocab = observe(d);
  ParamStore params;
  MultiTaskModel model(params, 5, vocab, funnel_model(ModelMode::kResflow));
  quantize_params(params);
  for (ParamId id = 0; id < params.count(); ++id)
    for (const double v : params.value(id).raw())
      CHECK(static_cast<double>(static_cast<float>(v)) == v);
  std::vector<double> once;
  for (ParamId id = 0; id < params.count(); ++id)
    for (const double v : params.value(id).raw()) once.push_back(v);
  quantize_params(params);
  std::vector<double> twice;
  for (ParamId id = 0; id < params.count(); ++id)
    for (const double v : params.value(id).raw()) twice.push_back(v);
  CHECK(once == twice);
}
