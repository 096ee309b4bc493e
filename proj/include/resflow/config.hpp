#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "resflow/model.hpp"
#include "resflow/trainer.hpp"

namespace resflow {

// Flat key-value run configuration with [section] headers.  Keys are stored
// fully qualified ("train.lr").  Every accessor failure names the offending
// key and, when it came from a file, its line number.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<config>");

  bool has(const std::string& key) const;
  // Preset/default layering: only takes effect if the key is absent.
  void set_default(const std::string& key, const std::string& value);
  // Command-line override: wins over the file unconditionally.
  void force(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_real(const std::string& key) const;
  double get_real(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_real_list(const std::string& key) const;

  // Keys present in the file but never read by the consumer.  build_run_config
  // turns a non-empty answer into a ConfigError, so typos cannot pass silently.
  std::vector<std::string> unread_keys() const;
  const std::string& origin() const { return origin_; }
  int line_of(const std::string& key) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;  // 0 = injected (preset or flag)
  };

  [[noreturn]] void fail(const std::string& key, const std::string& message) const;
  const Entry* find(const std::string& key) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> read_;
};

// Fully resolved run description assembled from a Config.
struct RunConfig {
  std::string train_manifest;
  std::string test_manifest;       // empty: carve the test split out of train
  double split_fraction = 0.8;
  int split_day = -1;              // >= 0: split at a day boundary instead
  int min_count = 1;               // embedding admission threshold
  int evict_window = 0;            // days; 0 disables eviction
  ModelConfig model;
  TrainOptions train;
  EvalOptions eval;
  std::string out_dir;
};

// Applies one of the named bundled presets as config defaults.
void apply_preset(Config& cfg, const std::string& name);
std::vector<std::string> preset_names();

// Consumes cfg (marking keys read), validates totality, resolves the mode:
// NSE drops every edge, ESMM strips residual decorations from edges, ResFlow
// keeps the graph as written.  Throws ConfigError on any problem.
RunConfig build_run_config(Config& cfg);

}  // namespace resflow
