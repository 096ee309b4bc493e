#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <tuple>

#include "resflow/checkpoint.hpp"
#include "resflow/config.hpp"
#include "resflow/errors.hpp"
#include "resflow/fusion.hpp"
#include "resflow/progressive.hpp"
#include "resflow/selfcheck.hpp"
#include "resflow/trainer.hpp"

namespace py = pybind11;
namespace rf = resflow;

namespace {

// Train side of the pipeline: split, ladder labels, bucketization,
// vocabulary, training, float32 quantization, evaluation. Matches what the
// train command does, minus the console output.
py::dict run_training(const std::string& config_text,
                      const std::string& out_dir) {
  rf::Config cfg = rf::Config::from_string(config_text, "<config>");
  rf::RunConfig run = rf::build_run_config(cfg);
  if (run.train_manifest.empty())
    throw rf::ConfigError("missing required key 'data.manifest'");

  rf::Dataset train_ds, test_ds;
  if (!run.test_manifest.empty()) {
    train_ds = rf::load_dataset(run.train_manifest);
    test_ds = rf::load_dataset(run.test_manifest);
  } else {
    rf::SplitSpec spec;
    if (run.split_day >= 0) {
      spec.mode = rf::SplitSpec::Mode::kDayBoundary;
      spec.boundary_day = run.split_day;
    } else {
      spec.fraction = run.split_fraction;
    }
    std::tie(train_ds, test_ds) =
        rf::split_by_time(rf::load_dataset(run.train_manifest), spec);
  }
  if (run.model.ladder) {
    rf::apply_ladder(train_ds, *run.model.ladder);
    rf::apply_ladder(test_ds, *run.model.ladder);
  }
  std::vector<std::string> numeric_names;
  for (const auto& spec : train_ds.schema.numeric)
    numeric_names.push_back(spec.name);
  const auto fitted = rf::bucketize_datasets({&train_ds, &test_ds});
  rf::EmbeddingVocab vocab(train_ds.schema.fields, run.min_count);
  vocab.observe(train_ds);
  vocab.freeze();

  rf::ParamStore params;
  rf::MultiTaskModel model(params, run.train.seed, vocab, run.model);
  rf::Adam adam(params, run.train.adam);
  const rf::TrainResult result = rf::train(model, adam, train_ds, run.train);
  rf::quantize_params(params);
  const rf::MetricReport report = rf::evaluate_model(model, test_ds, run.eval);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::pair<std::string, rf::Bucketizer>> named;
    for (std::size_t f = 0; f < fitted.size(); ++f)
      named.emplace_back(numeric_names[f], fitted[f]);
    rf::save_checkpoint(out_dir + "/model.ckpt", model, named);
  }

  py::dict out;
  out["metrics"] = report.values;
  out["steps"] = result.steps;
  out["loss_trace"] = result.loss_trace;
  return out;
}

py::dict evaluate_checkpoint(const std::string& checkpoint,
                             const std::string& manifest,
                             const std::vector<std::size_t>& ks,
                             const std::string& ranking_task) {
  rf::LoadedModel loaded = rf::load_checkpoint(checkpoint);
  rf::Dataset data = rf::load_dataset(manifest);
  const rf::ModelConfig& mc = loaded.model->config();
  if (mc.ladder) rf::apply_ladder(data, *mc.ladder);
  if (!loaded.bucketizers.empty()) {
    std::vector<rf::Bucketizer> fitted;
    for (const auto& [name, b] : loaded.bucketizers) fitted.push_back(b);
    rf::apply_bucketizers(data, fitted);
  }
  rf::EvalOptions opts;
  if (!ks.empty()) opts.ks = ks;
  opts.ranking_task = ranking_task;
  const rf::MetricReport report =
      rf::evaluate_model(*loaded.model, data, opts);
  py::dict out;
  out["metrics"] = report.values;
  return out;
}

std::string generate_funnel_files(const std::string& out_dir,
                                  const std::string& name, std::uint64_t seed,
                                  std::size_t lists, std::size_t list_size,
                                  std::size_t users, std::size_t items,
                                  double ctr, double atc, double cvr,
                                  std::size_t dim, double scale) {
  rf::FunnelConfig cfg;
  cfg.n_lists = lists;
  cfg.list_size = list_size;
  cfg.n_users = users;
  cfg.n_items = items;
  cfg.base_ctr = ctr;
  cfg.base_atc = atc;
  cfg.base_cvr = cvr;
  cfg.latent_dim = dim;
  cfg.affinity_scale = scale;
  const rf::Dataset data = rf::generate_funnel(seed, cfg);
  std::filesystem::create_directories(out_dir);
  rf::write_dataset(data, out_dir, name);
  return out_dir + "/" + name + ".manifest";
}

double ndcg_of(const std::vector<double>& scores,
               const std::vector<bool>& clicks,
               const std::vector<bool>& atcs,
               const std::vector<bool>& orders) {
  if (scores.size() != clicks.size() || scores.size() != atcs.size() ||
      scores.size() != orders.size())
    throw rf::UsageError("ndcg: input lengths differ");
  rf::RankedList list;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    rf::RankedItem item;
    item.score = scores[i];
    item.click = clicks[i];
    item.atc = atcs[i];
    item.order = orders[i];
    list.items.push_back(item);
  }
  return rf::ndcg(rf::ranked_by_score(list));
}

double wr_of(const std::vector<double>& scores, const std::vector<double>& w,
             std::size_t k, const std::string& variant) {
  if (scores.size() != w.size())
    throw rf::UsageError("weighted_recall: input lengths differ");
  rf::RankedList list;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    rf::RankedItem item;
    item.score = scores[i];
    item.w = w[i];
    list.items.push_back(item);
  }
  return rf::weighted_recall_at_k(rf::ranked_by_score(list), k,
                                  rf::wr_variant_from_string(variant));
}

using PyLists = std::vector<std::vector<std::tuple<double, double, double>>>;

std::vector<rf::PredictionList> to_prediction_lists(const PyLists& raw) {
  std::vector<rf::PredictionList> lists;
  for (std::size_t l = 0; l < raw.size(); ++l) {
    rf::PredictionList list;
    list.list_id = static_cast<std::int64_t>(l);
    for (std::size_t i = 0; i < raw[l].size(); ++i) {
      rf::PredictionItem item;
      item.item_id = static_cast<std::int64_t>(i);
      std::tie(item.ctr, item.ctcvr, item.w) = raw[l][i];
      item.order = item.w > 0.0;
      list.items.push_back(item);
    }
    lists.push_back(std::move(list));
  }
  return lists;
}

py::dict fuse_search(const PyLists& raw, const std::string& family,
                     std::size_t k, const std::string& variant,
                     const std::vector<double>& alphas,
                     const std::vector<double>& betas) {
  rf::GridSpec spec;
  spec.family = rf::fusion_family_from_string(family);
  spec.k = k;
  spec.variant = rf::wr_variant_from_string(variant);
  spec.alphas = alphas;
  spec.betas = betas;
  const rf::GridResult result = rf::grid_search(spec, to_prediction_lists(raw));
  py::dict out;
  out["alpha"] = result.best.alpha;
  out["beta"] = result.best.beta;
  out["metric"] = result.best_metric;
  py::list table;
  for (const auto& cell : result.table)
    table.append(py::make_tuple(cell.alpha, cell.beta, cell.metric));
  out["table"] = table;
  return out;
}

py::dict gradcheck(std::uint64_t seed, std::size_t instances) {
  const rf::SelfCheckSummary s = rf::run_gradcheck_suite(seed, instances);
  py::dict out;
  out["instances"] = s.instances;
  out["failures"] = s.failures;
  out["worst_rel_err"] = s.worst_rel_err;
  out["worst_param"] = s.worst_param;
  out["worst_instance"] = s.worst_instance;
  out["ok"] = s.ok();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-task ranking toolkit: inter-task residual networks, "
            "baselines, ranking metrics, and score fusion";

  py::register_exception<rf::ConfigError>(m, "ConfigError");
  py::register_exception<rf::UsageError>(m, "UsageError");
  py::register_exception<rf::DataError>(m, "DataError");
  py::register_exception<rf::NumericError>(m, "NumericError");
  py::register_exception<rf::UndefinedMetricError>(m, "UndefinedMetricError");

  m.def("run_training", &run_training, py::arg("config_text"),
        py::arg("out_dir") = "",
        "Train per the given config text; returns metrics, steps, and the "
        "loss trace. Writes model.ckpt into out_dir when given.");
  m.def("evaluate_checkpoint", &evaluate_checkpoint, py::arg("checkpoint"),
        py::arg("manifest"), py::arg("ks") = std::vector<std::size_t>{},
        py::arg("ranking_task") = "",
        "Evaluate a saved checkpoint on a dataset manifest.");
  m.def("generate_funnel", &generate_funnel_files, py::arg("out_dir"),
        py::arg("name") = "funnel", py::arg("seed") = 1,
        py::arg("lists") = 20000, py::arg("list_size") = 50,
        py::arg("users") = 10000, py::arg("items") = 5000,
        py::arg("ctr") = 0.084, py::arg("atc") = 0.30, py::arg("cvr") = 0.026,
        py::arg("dim") = 4, py::arg("scale") = 1.0,
        "Write a synthetic funnel dataset; returns the manifest path.");

  m.def("auc", &rf::auc, py::arg("scores"), py::arg("labels"),
        "Ties count half; throws UndefinedMetricError on single-class "
        "input.");
  m.def("ndcg", &ndcg_of, py::arg("scores"), py::arg("clicks"),
        py::arg("atcs"), py::arg("orders"));
  m.def("weighted_recall", &wr_of, py::arg("scores"), py::arg("w"),
        py::arg("k"), py::arg("variant") = "identity");
  m.def(
      "pearson",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const rf::PearsonResult r = rf::pearson(x, y);
        return py::make_tuple(r.r, r.p_value);
      },
      py::arg("x"), py::arg("y"), "Returns (r, two_sided_p_value).");

  m.def(
      "decode_expectation",
      [](const std::vector<double>& q, const std::vector<double>& ladder) {
        return rf::decode_expectation(q, rf::ThresholdLadder(ladder));
      },
      py::arg("q"), py::arg("ladder"));
  m.def(
      "encode_labels",
      [](double v, const std::vector<double>& ladder) {
        return rf::encode_labels(v, rf::ThresholdLadder(ladder));
      },
      py::arg("v"), py::arg("ladder"));

  m.def(
      "fuse",
      [](const std::string& family, double alpha, double beta, double ctr,
         double ctcvr) {
        rf::FusionFormula f;
        f.family = rf::fusion_family_from_string(family);
        f.alpha = alpha;
        f.beta = beta;
        return rf::fuse(f, ctr, ctcvr);
      },
      py::arg("family"), py::arg("alpha"), py::arg("beta"), py::arg("ctr"),
      py::arg("ctcvr"));
  m.def("fuse_search", &fuse_search, py::arg("lists"),
        py::arg("family") = "add", py::arg("k") = 10,
        py::arg("variant") = "identity",
        py::arg("alphas") = std::vector<double>{},
        py::arg("betas") = std::vector<double>{},
        "Grid-search (alpha, beta) over lists of (ctr, ctcvr, w) triples.");

  m.def("gradcheck", &gradcheck, py::arg("seed") = 1,
        py::arg("instances") = 50);
  m.def("presets", &rf::preset_names);
}
