#include "resflow/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "resflow/errors.hpp"
#include "resflow/progressive.hpp"

namespace resflow {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where() + "unterminated section header '" + line +
                          "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(where() + "empty section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where() + "expected 'key = value', got '" + line +
                        "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where() + "empty key name");
    std::string full = section.empty() ? key : section + "." + key;
    auto [it, inserted] = cfg.entries_.emplace(full, Entry{value, lineno});
    if (!inserted)
      throw ConfigError(where() + "duplicate key '" + full +
                        "' (first set on line " +
                        std::to_string(it->second.line) + ")");
  }
  return cfg;
}

bool Config::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

void Config::set_default(const std::string& key, const std::string& value) {
  entries_.emplace(key, Entry{value, 0});
}

void Config::force(const std::string& key, const std::string& value) {
  entries_[key] = Entry{value, 0};
}

const Config::Entry* Config::find(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  read_.insert(key);
  return &it->second;
}

void Config::fail(const std::string& key, const std::string& message) const {
  const Entry* e = nullptr;
  if (auto it = entries_.find(key); it != entries_.end()) e = &it->second;
  std::string at = origin_;
  if (e && e->line > 0) at += ":" + std::to_string(e->line);
  throw ConfigError(at + ": key '" + key + "': " + message);
}

int Config::line_of(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? -1 : it->second.line;
}

std::string Config::get_string(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return e->value;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double Config::get_real(const std::string& key) const {
  const std::string s = get_string(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    fail(key, "expected a real number, got '" + s + "'");
  return v;
}

double Config::get_real(const std::string& key, double fallback) const {
  return has(key) ? get_real(key) : fallback;
}

long long Config::get_int(const std::string& key) const {
  const std::string s = get_string(key);
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    fail(key, "expected an integer, got '" + s + "'");
  return v;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
  const std::string s = lower(get_string(key));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(key, "expected a boolean, got '" + s + "'");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  auto items = split_csv(get_string(key));
  if (items.empty()) fail(key, "expected a comma-separated list");
  return items;
}

std::vector<double> Config::get_real_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0')
      fail(key, "expected a list of reals, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> Config::unread_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, entry] : entries_)
    if (!read_.count(key)) out.push_back(key);
  return out;
}

std::vector<std::string> preset_names() {
  return {"movielens-traditional", "movielens-progressive", "funnel"};
}

void apply_preset(Config& cfg, const std::string& name) {
  auto set = [&](const char* k, const char* v) { cfg.set_default(k, v); };
  if (name == "movielens-traditional") {
    set("model.mode", "nse");
    set("model.tasks", "rating");
    set("model.loss", "mse");
    set("model.widths", "192,128,1");
    set("model.emb_dim", "8");
    set("train.lr", "1e-3");
    set("train.batch_size", "512");
    set("train.epochs", "1");
  } else if (name == "movielens-progressive") {
    set("model.mode", "resflow");
    set("model.ladder", "1,2,3,4,5");
    set("model.widths", "128,64,1");
    set("model.emb_dim", "8");
    set("train.lr", "1e-3");
    set("train.batch_size", "512");
    set("train.epochs", "1");
  } else if (name == "funnel") {
    set("model.mode", "resflow");
    set("model.tasks", "click,atc,order");
    set("model.widths", "128,64,1");
    set("model.emb_dim", "8");
    set("train.lr", "1e-3");
    set("train.batch_size", "512");
    set("train.epochs", "1");
    set("eval.ranking_task", "order");
  } else {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (available: " + names +
                      ")");
  }
}

namespace {

std::vector<std::size_t> parse_widths(Config& cfg) {
  std::vector<std::size_t> widths;
  for (const auto& item : cfg.get_list("model.widths")) {
    char* end = nullptr;
    const long long v = std::strtoll(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0' || v < 1)
      throw ConfigError("key 'model.widths': expected positive integers, got '" +
                        item + "'");
    widths.push_back(static_cast<std::size_t>(v));
  }
  if (widths.empty())
    throw ConfigError("key 'model.widths': needs at least one layer");
  return widths;
}

std::vector<ResidualEdge> parse_edges(Config& cfg, const TaskGraph& graph) {
  std::vector<ResidualEdge> edges;
  if (cfg.has("model.edges")) {
    for (const auto& item : cfg.get_list("model.edges")) {
      auto arrow = item.find("->");
      if (arrow == std::string::npos)
        throw ConfigError("key 'model.edges': expected 'src->dst', got '" +
                          item + "'");
      const std::string src = trim(item.substr(0, arrow));
      const std::string dst = trim(item.substr(arrow + 2));
      ResidualEdge e;
      e.src = graph.task_index(src);  // throws naming the task
      e.dst = graph.task_index(dst);
      edges.push_back(e);
    }
  } else {
    for (std::size_t k = 1; k < graph.tasks.size(); ++k)
      edges.push_back(ResidualEdge{k - 1, k, {}, false});
  }
  return edges;
}

// Decorates edges with feature/logit links per the `model.links` choice.
void apply_links(Config& cfg, ModelConfig& m) {
  const std::size_t depth = m.tower.depth();
  const std::string links = lower(cfg.get_string("model.links", "all"));
  std::vector<std::size_t> layers;
  bool logit = false;
  if (links == "all") {
    for (std::size_t l = 1; l < depth; ++l) layers.push_back(l);
    logit = true;
  } else if (links == "h1") {
    if (depth < 2)
      throw ConfigError("key 'model.links': h1 needs at least one hidden layer");
    layers = {1};
  } else if (links == "h2") {
    if (depth < 3)
      throw ConfigError("key 'model.links': h2 needs at least two hidden layers");
    layers = {2};
  } else if (links == "logit" || links == "lr") {
    logit = true;
  } else if (links == "none") {
  } else if (links == "custom") {
    for (double v : cfg.get_real_list("model.link_layers")) {
      if (v < 1 || v != static_cast<std::size_t>(v))
        throw ConfigError(
            "key 'model.link_layers': expected 1-based hidden depths");
      layers.push_back(static_cast<std::size_t>(v));
    }
    logit = cfg.get_bool("model.logit_link", true);
  } else {
    throw ConfigError("key 'model.links': unknown choice '" + links +
                      "' (all, h1, h2, logit, none, custom)");
  }
  for (auto& e : m.graph.edges) {
    e.layers = layers;
    e.logit_link = logit;
  }
}

std::vector<LossKind> parse_loss(Config& cfg, std::size_t n_tasks) {
  std::vector<std::string> items;
  if (cfg.has("model.loss"))
    items = cfg.get_list("model.loss");
  else
    items = {"bce"};
  if (items.size() == 1) items.assign(n_tasks, items.front());
  if (items.size() != n_tasks)
    throw ConfigError("key 'model.loss': expected 1 or " +
                      std::to_string(n_tasks) + " entries, got " +
                      std::to_string(items.size()));
  std::vector<LossKind> out;
  for (auto& item : items) {
    const std::string s = lower(item);
    if (s == "bce")
      out.push_back(LossKind::kBce);
    else if (s == "mse")
      out.push_back(LossKind::kMse);
    else
      throw ConfigError("key 'model.loss': unknown loss '" + item +
                        "' (bce, mse)");
  }
  return out;
}

std::vector<double> parse_weights(Config& cfg, const std::string& key,
                                  std::size_t n_tasks) {
  std::vector<double> w = cfg.has(key) ? cfg.get_real_list(key)
                                       : std::vector<double>{1.0};
  if (w.size() == 1) w.assign(n_tasks, w.front());
  if (w.size() != n_tasks)
    throw ConfigError("key '" + key + "': expected 1 or " +
                      std::to_string(n_tasks) + " entries, got " +
                      std::to_string(w.size()));
  for (double v : w)
    if (!(v >= 0.0))
      throw ConfigError("key '" + key + "': weights must be non-negative");
  return w;
}

}  // namespace

RunConfig build_run_config(Config& cfg) {
  if (cfg.has("preset")) apply_preset(cfg, cfg.get_string("preset"));

  RunConfig run;

  // [data]
  if (cfg.has("data.manifest") && cfg.has("data.train"))
    throw ConfigError("keys 'data.manifest' and 'data.train' conflict; use one");
  run.train_manifest = cfg.get_string(
      "data.manifest", cfg.get_string("data.train", ""));
  run.test_manifest = cfg.get_string("data.test", "");
  const std::string split = cfg.get_string("data.split", "0.8");
  if (split.rfind("day:", 0) == 0) {
    char* end = nullptr;
    run.split_day =
        static_cast<int>(std::strtoll(split.c_str() + 4, &end, 10));
    if (end == split.c_str() + 4 || *end != '\0')
      throw ConfigError("key 'data.split': expected 'day:<n>', got '" + split +
                        "'");
  } else {
    char* end = nullptr;
    run.split_fraction = std::strtod(split.c_str(), &end);
    if (end == split.c_str() || *end != '\0' || run.split_fraction <= 0.0 ||
        run.split_fraction >= 1.0)
      throw ConfigError(
          "key 'data.split': expected a fraction in (0, 1) or 'day:<n>', got '" +
          split + "'");
  }
  run.min_count = static_cast<int>(cfg.get_int("data.min_count", 1));
  if (run.min_count < 0)
    throw ConfigError("key 'data.min_count': must be >= 0");
  run.evict_window = static_cast<int>(cfg.get_int("data.evict_window", 0));
  if (run.evict_window < 0)
    throw ConfigError("key 'data.evict_window': must be >= 0");

  // [model]
  ModelConfig& m = run.model;
  m.mode = model_mode_from_string(cfg.get_string("model.mode", "resflow"));
  m.tower.widths = parse_widths(cfg);
  m.tower.twin = cfg.get_bool("model.twin", false);
  m.tower.hidden_act =
      activation_from_string(cfg.get_string("model.activation", "prelu"));
  m.tower.dropout = cfg.get_real("model.dropout", 0.0);
  if (m.tower.dropout < 0.0 || m.tower.dropout >= 1.0)
    throw ConfigError("key 'model.dropout': must be in [0, 1)");
  m.tower.residual_before_dot = cfg.get_bool("model.before_dot", false);
  const long long emb = cfg.get_int("model.emb_dim", 8);
  if (emb < 1) throw ConfigError("key 'model.emb_dim': must be >= 1");
  m.emb_dim = static_cast<std::size_t>(emb);

  if (cfg.has("model.ladder")) {
    if (cfg.has("model.tasks"))
      throw ConfigError(
          "keys 'model.tasks' and 'model.ladder' conflict; ladder names the "
          "tasks itself");
    m.ladder = cfg.get_real_list("model.ladder");
    ThresholdLadder lad(*m.ladder);  // validates; throws ConfigError
    for (std::size_t k = 1; k <= lad.tasks(); ++k)
      m.graph.tasks.push_back(ladder_task_name(lad.v(k)));
  } else {
    m.graph.tasks = cfg.get_list("model.tasks");
  }

  m.graph.edges = parse_edges(cfg, m.graph);
  switch (m.mode) {
    case ModelMode::kNse:
      m.graph.edges.clear();
      break;
    case ModelMode::kEsmm:
      for (auto& e : m.graph.edges) {
        e.layers.clear();
        e.logit_link = false;
      }
      break;
    case ModelMode::kResflow:
      apply_links(cfg, m);
      break;
  }

  m.loss = parse_loss(cfg, m.graph.tasks.size());
  if (m.ladder)
    for (LossKind l : m.loss)
      if (l != LossKind::kBce)
        throw ConfigError("key 'model.loss': progressive tasks are binary; "
                          "use bce");
  m.task_weight = parse_weights(cfg, "model.task_weight", m.graph.tasks.size());
  m.pos_weight = parse_weights(cfg, "model.pos_weight", m.graph.tasks.size());
  m.neg_weight = parse_weights(cfg, "model.neg_weight", m.graph.tasks.size());

  m.reg.kind =
      regularizer_from_string(cfg.get_string("model.regularizer", "none"));
  m.reg.lambda = cfg.get_real("model.lambda", 0.1);
  if (m.reg.lambda < 0.0)
    throw ConfigError("key 'model.lambda': must be >= 0");
  if (m.reg.kind != Regularizer::kNone && m.mode != ModelMode::kResflow)
    throw ConfigError("key 'model.regularizer': regularizer '" +
                      to_string(m.reg.kind) + "' requires resflow mode");
  if (m.reg.kind == Regularizer::kM3) m.tower.mandate = true;

  if (cfg.has("model.user_fields"))
    m.user_fields = cfg.get_list("model.user_fields");
  if (cfg.has("model.item_fields"))
    m.item_fields = cfg.get_list("model.item_fields");

  // [train]
  const long long epochs = cfg.get_int("train.epochs", 1);
  if (epochs < 0) throw ConfigError("key 'train.epochs': must be >= 0");
  run.train.epochs = static_cast<std::size_t>(epochs);
  const long long batch = cfg.get_int("train.batch_size", 512);
  if (batch < 1) throw ConfigError("key 'train.batch_size': must be >= 1");
  run.train.batch_size = static_cast<std::size_t>(batch);
  run.train.adam.lr = cfg.get_real("train.lr", 1e-3);
  if (!(run.train.adam.lr > 0.0))
    throw ConfigError("key 'train.lr': must be > 0");
  run.train.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 1));

  // [eval]
  run.eval.ks.clear();
  if (cfg.has("eval.k")) {
    for (double v : cfg.get_real_list("eval.k")) {
      if (v < 1 || v != static_cast<std::size_t>(v))
        throw ConfigError("key 'eval.k': expected positive integers");
      run.eval.ks.push_back(static_cast<std::size_t>(v));
    }
  } else {
    run.eval.ks = {10, 50, 100};
  }
  run.eval.ranking_task = cfg.get_string("eval.ranking_task", "");

  // [output]
  run.out_dir = cfg.get_string("output.dir", "");

  const auto unread = cfg.unread_keys();
  if (!unread.empty()) {
    std::string msg = cfg.origin() + ": unknown key";
    msg += unread.size() > 1 ? "s" : "";
    for (const auto& key : unread) {
      msg += " '" + key + "'";
      if (int line = cfg.line_of(key); line > 0)
        msg += " (line " + std::to_string(line) + ")";
    }
    throw ConfigError(msg);
  }

  m.validate();
  return run;
}

}  // namespace resflow
