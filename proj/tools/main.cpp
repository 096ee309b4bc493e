#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "resflow/checkpoint.hpp"
#include "resflow/config.hpp"
#include "resflow/errors.hpp"
#include "resflow/fusion.hpp"
#include "resflow/progressive.hpp"
#include "resflow/selfcheck.hpp"
#include "resflow/trainer.hpp"

namespace rf = resflow;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<std::size_t> parse_ks(const std::string& csv) {
  std::vector<std::size_t> ks;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    char* end = nullptr;
    const long long v = std::strtoll(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0' || v < 1)
      throw rf::UsageError("--k expects positive integers, got '" + item +
                           "'");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw rf::UsageError("--k expects at least one value");
  return ks;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rf::DataError("cannot write '" + path + "'");
  return out;
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
  std::string config;
  std::string mode;
  std::string out;
  std::string k;
  long long seed = -1;
  long long epochs = -1;
};

int cmd_train(const TrainArgs& a) {
  rf::Config cfg = rf::Config::from_file(a.config);
  if (a.seed >= 0) cfg.force("train.seed", std::to_string(a.seed));
  if (!a.mode.empty()) cfg.force("model.mode", a.mode);
  if (a.epochs >= 0) cfg.force("train.epochs", std::to_string(a.epochs));
  if (!a.k.empty()) cfg.force("eval.k", a.k);
  if (!a.out.empty()) cfg.force("output.dir", a.out);
  rf::RunConfig run = rf::build_run_config(cfg);
  if (run.train_manifest.empty())
    throw rf::ConfigError(cfg.origin() +
                          ": missing required key 'data.manifest'");

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
  std::vector<std::pair<std::string, rf::Bucketizer>> named;
  for (std::size_t f = 0; f < fitted.size(); ++f)
    named.emplace_back(numeric_names[f], fitted[f]);

  rf::EmbeddingVocab vocab(train_ds.schema.fields, run.min_count);
  vocab.observe(train_ds);
  if (run.evict_window > 0 && train_ds.schema.has_timestamps()) {
    std::int64_t latest = train_ds.day(0);
    for (std::size_t i = 1; i < train_ds.size(); ++i)
      latest = std::max(latest, train_ds.day(i));
    vocab.evict(latest, run.evict_window);
  }
  vocab.freeze();

  rf::ParamStore params;
  rf::MultiTaskModel model(params, run.train.seed, vocab, run.model);
  for (std::size_t k = 0; k < run.model.graph.tasks.size(); ++k)
    if (run.model.loss[k] == rf::LossKind::kBce &&
        model.label_column(train_ds, k) < 0)
      throw rf::DataError("no label column for task '" +
                          run.model.graph.tasks[k] + "'");

  rf::Adam opt(params, run.train.adam);
  const rf::TrainResult result = rf::train(model, opt, train_ds, run.train);
  std::cerr << "trained " << result.steps << " steps over "
            << train_ds.size() << " samples";
  if (!result.loss_trace.empty())
    std::cerr << ", last batch loss " << fmtg(result.loss_trace.back());
  std::cerr << "\n";

  // Checkpoints hold float32; quantize now so the reported metrics match a
  // reload bit for bit.
  rf::quantize_params(params);
  const rf::MetricReport report = rf::evaluate_model(model, test_ds, run.eval);

  const std::string dir = run.out_dir.empty() ? "." : run.out_dir;
  std::filesystem::create_directories(dir);
  rf::save_checkpoint(dir + "/model.ckpt", model, named);
  {
    auto out = open_out(dir + "/loss_trace.tsv");
    out << "step\tloss\n";
    for (std::size_t s = 0; s < result.loss_trace.size(); ++s)
      out << (s + 1) << "\t" << fmt17(result.loss_trace[s]) << "\n";
  }
  open_out(dir + "/report.json") << report.to_json();
  std::cout << report.to_json();
  std::cerr << "wrote " << dir << "/model.ckpt\n";
  return 0;
}

// ------------------------------------------------------------- evaluate ---

// Loads a checkpoint plus a dataset and replays the training-time input
// transforms (ladder labels, bucketization), verifying that the dataset
// still matches the checkpoint's schema.
struct Prepared {
  rf::LoadedModel loaded;
  rf::Dataset data;
};

Prepared prepare(const std::string& ckpt, const std::string& manifest) {
  Prepared p{rf::load_checkpoint(ckpt), {}};
  p.data = rf::load_dataset(manifest);
  const rf::ModelConfig& mc = p.loaded.model->config();

  if (mc.ladder) {
    rf::ThresholdLadder lad(*mc.ladder);
    const auto& cols = p.data.schema.label_columns;
    const std::string first = rf::ladder_task_name(lad.v(1));
    if (std::find(cols.begin(), cols.end(), first) == cols.end())
      rf::apply_ladder(p.data, *mc.ladder);
  }

  const auto& named = p.loaded.bucketizers;
  if (p.data.schema.numeric.size() != named.size())
    throw rf::DataError("checkpoint has " + std::to_string(named.size()) +
                        " bucketizers but the dataset has " +
                        std::to_string(p.data.schema.numeric.size()) +
                        " numeric columns");
  for (std::size_t f = 0; f < named.size(); ++f)
    if (p.data.schema.numeric[f].name != named[f].first)
      throw rf::DataError("numeric column '" + p.data.schema.numeric[f].name +
                          "' does not match checkpoint bucketizer '" +
                          named[f].first + "'");
  if (!named.empty()) {
    std::vector<rf::Bucketizer> fitted;
    for (const auto& [name, b] : named) fitted.push_back(b);
    rf::apply_bucketizers(p.data, fitted);
  }

  const rf::EmbeddingVocab& vocab = *p.loaded.vocab;
  if (p.data.schema.fields.size() != vocab.field_count())
    throw rf::DataError("checkpoint expects " +
                        std::to_string(vocab.field_count()) +
                        " fields but the dataset has " +
                        std::to_string(p.data.schema.fields.size()));
  for (std::size_t f = 0; f < vocab.field_count(); ++f)
    if (p.data.schema.fields[f].name != vocab.field(f).name)
      throw rf::DataError("field '" + p.data.schema.fields[f].name +
                          "' does not match checkpoint field '" +
                          vocab.field(f).name + "'");
  return p;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string k;
  std::string out;
  std::string ranking_task;
};

int cmd_evaluate(const EvaluateArgs& a) {
  Prepared p = prepare(a.checkpoint, a.manifest);
  rf::EvalOptions opts;
  if (!a.k.empty()) opts.ks = parse_ks(a.k);
  opts.ranking_task = a.ranking_task;
  const rf::MetricReport report =
      rf::evaluate_model(*p.loaded.model, p.data, opts);
  std::cout << report.to_json();
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    open_out(a.out + "/report.json") << report.to_json();
    if (p.data.schema.has_lists()) {
      const auto preds = p.loaded.model->predict(p.data);
      rf::write_predictions(a.out + "/predictions.csv", p.data, preds.front(),
                            preds.back());
      std::cerr << "wrote " << a.out << "/predictions.csv\n";
    }
  }
  return 0;
}

// ----------------------------------------------------------- fuse-search ---

struct FuseArgs {
  std::string predictions;
  std::string family = "add";
  std::string variant = "identity";
  std::string out;
  std::string alphas;
  std::string betas;
  long long k = 10;
};

int cmd_fuse_search(const FuseArgs& a) {
  if (a.k < 1) throw rf::UsageError("--k must be >= 1");
  const auto lists = rf::read_predictions(a.predictions);
  std::vector<rf::FusionFamily> families;
  if (a.family == "both") {
    families = {rf::FusionFamily::kAdditive, rf::FusionFamily::kMultiplicative};
  } else {
    families = {rf::fusion_family_from_string(a.family)};
  }
  const rf::WrVariant variant = rf::wr_variant_from_string(a.variant);
  const std::string metric_name =
      (variant == rf::WrVariant::kIdentity
           ? "wr@"
           : "wr_" + rf::to_string(variant) + "@") +
      std::to_string(a.k);

  nlohmann::ordered_json best_json;
  std::cout << "family\talpha\tbeta\t" << metric_name << "\n";
  for (const rf::FusionFamily family : families) {
    rf::GridSpec spec;
    spec.family = family;
    spec.k = static_cast<std::size_t>(a.k);
    spec.variant = variant;
    auto parse_grid = [](const std::string& csv) {
      std::vector<double> out;
      std::string item;
      std::istringstream in(csv);
      while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (end == item.c_str() || *end != '\0')
          throw rf::UsageError("grid values must be reals, got '" + item +
                               "'");
        out.push_back(v);
      }
      return out;
    };
    if (!a.alphas.empty()) spec.alphas = parse_grid(a.alphas);
    if (!a.betas.empty()) spec.betas = parse_grid(a.betas);

    const rf::GridResult result = rf::grid_search(spec, lists);
    std::vector<rf::GridCell> table = result.table;
    std::stable_sort(table.begin(), table.end(),
                     [](const rf::GridCell& x, const rf::GridCell& y) {
                       return x.metric > y.metric;
                     });
    for (const auto& cell : table)
      std::cout << rf::to_string(family) << "\t" << fmtg(cell.alpha) << "\t"
                << fmtg(cell.beta) << "\t" << fmt17(cell.metric) << "\n";
    std::cerr << "best " << rf::to_string(family)
              << ": alpha=" << fmtg(result.best.alpha)
              << " beta=" << fmtg(result.best.beta) << " " << metric_name
              << "=" << fmt17(result.best_metric) << "\n";
    best_json[rf::to_string(family)] = {{"alpha", result.best.alpha},
                                        {"beta", result.best.beta},
                                        {metric_name, result.best_metric}};
  }
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    open_out(a.out + "/fuse_best.json") << best_json.dump(2) << "\n";
  }
  return 0;
}

// ------------------------------------------------------------- gradcheck ---

struct GradcheckArgs {
  long long seed = 1;
  long long instances = 50;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.instances < 1) throw rf::UsageError("--instances must be >= 1");
  std::function<void(rf::ParamStore&)> tamper;
  if (a.corrupt)
    tamper = [](rf::ParamStore& params) { params.grad(0)(0, 0) += 0.5; };
  const rf::SelfCheckSummary summary = rf::run_gradcheck_suite(
      static_cast<std::uint64_t>(a.seed),
      static_cast<std::size_t>(a.instances), tamper);
  std::cout << "instances\t" << summary.instances << "\n"
            << "failures\t" << summary.failures << "\n"
            << "worst_rel_err\t" << fmt17(summary.worst_rel_err) << "\n"
            << "worst_param\t" << summary.worst_param << "\n"
            << "worst_instance\t" << summary.worst_instance << "\n";
  if (!summary.ok())
    throw rf::NumericError("gradient check failed on " +
                           std::to_string(summary.failures) + " of " +
                           std::to_string(summary.instances) +
                           " instances (worst " +
                           fmtg(summary.worst_rel_err) + " at " +
                           summary.worst_param + ", " +
                           summary.worst_instance + ")");
  std::cout << "PASS\n";
  return 0;
}

// ----------------------------------------------------- generate-synthetic ---

struct GenerateArgs {
  std::string out;
  std::string name = "funnel";
  long long seed = 1;
  long long lists = 20000;
  long long list_size = 50;
  long long users = 10000;
  long long items = 5000;
  long long dim = 4;
  double ctr = 0.084;
  double atc = 0.30;
  double cvr = 0.026;
  double scale = 1.0;
};

int cmd_generate(const GenerateArgs& a) {
  rf::FunnelConfig cfg;
  if (a.lists < 1 || a.list_size < 1 || a.users < 1 || a.items < 1 ||
      a.dim < 1)
    throw rf::UsageError("sizes must be >= 1");
  cfg.n_lists = static_cast<std::size_t>(a.lists);
  cfg.list_size = static_cast<std::size_t>(a.list_size);
  cfg.n_users = static_cast<std::size_t>(a.users);
  cfg.n_items = static_cast<std::size_t>(a.items);
  cfg.latent_dim = static_cast<std::size_t>(a.dim);
  cfg.base_ctr = a.ctr;
  cfg.base_atc = a.atc;
  cfg.base_cvr = a.cvr;
  cfg.affinity_scale = a.scale;
  const rf::Dataset data =
      rf::generate_funnel(static_cast<std::uint64_t>(a.seed), cfg);
  std::filesystem::create_directories(a.out);
  rf::write_dataset(data, a.out, a.name);
  double clicks = 0, orders = 0;
  for (double v : data.labels[0]) clicks += v;
  for (double v : data.labels[2]) orders += v;
  const double n = static_cast<double>(data.size());
  std::cerr << data.size() << " samples, click rate " << fmtg(clicks / n)
            << ", order rate " << fmtg(orders / n) << "\n";
  std::cout << a.out << "/" << a.name << ".manifest\n";
  return 0;
}

// ------------------------------------------------------ dump-activations ---

struct DumpArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  long long limit = 8;
};

int cmd_dump_activations(const DumpArgs& a) {
  if (a.limit < 1) throw rf::UsageError("--limit must be >= 1");
  Prepared p = prepare(a.checkpoint, a.manifest);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0;
       i < std::min(p.data.size(), static_cast<std::size_t>(a.limit)); ++i)
    rows.push_back(i);
  if (rows.empty()) throw rf::DataError("dataset is empty");
  const rf::ActivationDump dump =
      rf::dump_activations(*p.loaded.model, p.data, rows);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!a.out.empty()) {
    file = open_out(a.out);
    out = &file;
  }
  *out << "task\tdepth\thalf\tkind\trow\tcol\tvalue\n";
  const char* kinds[] = {"src", "residual", "sum"};
  for (const auto& e : dump.entries) {
    const rf::Mat* mats[] = {&e.src, &e.residual, &e.sum};
    for (int m = 0; m < 3; ++m)
      for (std::size_t r = 0; r < mats[m]->rows(); ++r)
        for (std::size_t c = 0; c < mats[m]->cols(); ++c)
          *out << e.task << "\t" << e.depth << "\t" << e.half << "\t"
               << kinds[m] << "\t" << r << "\t" << c << "\t"
               << fmt17((*mats[m])(r, c)) << "\n";
  }
  if (dump.entries.empty())
    std::cerr << "model has no residual links; nothing to dump\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task ranking toolkit: inter-task residual networks, "
               "baselines, ranking metrics, and score fusion"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a config");
  train->add_option("--config", train_args.config, "Run config path")
      ->required();
  train->add_option("--seed", train_args.seed, "Override train.seed");
  train->add_option("--mode", train_args.mode,
                    "Override model.mode (nse|esmm|resflow)");
  train->add_option("--epochs", train_args.epochs, "Override train.epochs");
  train->add_option("--out", train_args.out, "Artifact directory");
  train->add_option("--k", train_args.k, "Override eval.k, e.g. 10,50,100");

  EvaluateArgs eval_args;
  auto* evaluate =
      app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  evaluate->add_option("checkpoint", eval_args.checkpoint, "Checkpoint path")
      ->required();
  evaluate->add_option("dataset", eval_args.manifest, "Dataset manifest")
      ->required();
  evaluate->add_option("--k", eval_args.k, "Cutoffs, e.g. 10,50,100");
  evaluate->add_option("--out", eval_args.out,
                       "Directory for report.json and predictions.csv");
  evaluate->add_option("--ranking-task", eval_args.ranking_task,
                       "Task whose score ranks the lists");
  long long eval_seed = 0;
  evaluate->add_option("--seed", eval_seed, "Accepted for uniformity; unused");

  FuseArgs fuse_args;
  auto* fuse =
      app.add_subcommand("fuse-search", "Grid-search a score fusion formula");
  fuse->add_option("predictions", fuse_args.predictions,
                   "predictions.csv from evaluate")
      ->required();
  fuse->add_option("--family", fuse_args.family, "add|mul|both");
  fuse->add_option("--k", fuse_args.k, "Cutoff for the searched metric");
  fuse->add_option("--variant", fuse_args.variant,
                   "identity|log|sqrt|square");
  fuse->add_option("--alphas", fuse_args.alphas, "Grid override, CSV");
  fuse->add_option("--betas", fuse_args.betas, "Grid override, CSV");
  fuse->add_option("--out", fuse_args.out, "Directory for fuse_best.json");
  long long fuse_seed = 0;
  fuse->add_option("--seed", fuse_seed, "Accepted for uniformity; unused");

  GradcheckArgs grad_args;
  auto* grad = app.add_subcommand(
      "gradcheck", "Finite-difference check over random model instances");
  grad->add_option("--seed", grad_args.seed, "Instance generator seed");
  grad->add_option("--instances", grad_args.instances, "Instance count");
  grad->add_flag("--corrupt", grad_args.corrupt,
                 "Tamper with one gradient (negative control; must fail)");

  GenerateArgs gen_args;
  auto* gen = app.add_subcommand("generate-synthetic",
                                 "Write a synthetic funnel dataset");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--name", gen_args.name, "Dataset name");
  gen->add_option("--seed", gen_args.seed, "Generator seed");
  gen->add_option("--lists", gen_args.lists, "Number of ranked lists");
  gen->add_option("--list-size", gen_args.list_size, "Items per list");
  gen->add_option("--users", gen_args.users, "User universe size");
  gen->add_option("--items", gen_args.items, "Item universe size");
  gen->add_option("--dim", gen_args.dim, "Latent affinity dimension");
  gen->add_option("--ctr", gen_args.ctr, "Target click rate");
  gen->add_option("--atc", gen_args.atc, "Target add-to-cart rate per click");
  gen->add_option("--cvr", gen_args.cvr, "Target order rate per click");
  gen->add_option("--scale", gen_args.scale, "Affinity sharpness multiplier");

  DumpArgs dump_args;
  auto* dump = app.add_subcommand(
      "dump-activations", "Dump per-link carried, residual, and summed values");
  dump->add_option("checkpoint", dump_args.checkpoint, "Checkpoint path")
      ->required();
  dump->add_option("dataset", dump_args.manifest, "Dataset manifest")
      ->required();
  dump->add_option("--limit", dump_args.limit, "Sample count");
  dump->add_option("--out", dump_args.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*evaluate) return cmd_evaluate(eval_args);
    if (*fuse) return cmd_fuse_search(fuse_args);
    if (*grad) return cmd_gradcheck(grad_args);
    if (*gen) return cmd_generate(gen_args);
    if (*dump) return cmd_dump_activations(dump_args);
  } catch (const rf::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const rf::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rf::UndefinedMetricError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
