#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "resflow/errors.hpp"
#include "resflow/rng.hpp"

namespace resflow {

// Sentinel for an absent single-value categorical cell; it routes to the
// field's default embedding.
inline constexpr std::int64_t kMissingId =
    std::numeric_limits<std::int64_t>::min();

struct FieldSpec {
  std::string name;
  bool multi_value = false;
  // counted: ids enter the vocabulary only when seen more than min_count
  // times. enumerated: every seen id gets an entry.
  bool counted = true;
};

struct NumericSpec {
  std::string name;
  std::size_t buckets = 100;
};

struct DatasetSchema {
  std::vector<FieldSpec> fields;
  std::vector<NumericSpec> numeric;       // bucketized into categorical fields
  std::vector<std::string> label_columns; // binary task labels, funnel order
  std::string target_column;              // numeric regression target
  std::string timestamp_column;
  std::string timestamp_unit = "seconds"; // "seconds" | "days"
  std::string list_id_column;             // ranked-list grouping
  std::string item_id_column;
  std::string weight_column;              // order-count W for list metrics

  std::size_t field_index(const std::string& name) const;
  bool has_timestamps() const { return !timestamp_column.empty(); }
  bool has_lists() const { return !list_id_column.empty(); }
};

struct FieldColumn {
  // One of the two is populated, per FieldSpec.multi_value.
  std::vector<std::int64_t> single;
  std::vector<std::vector<std::int64_t>> multi;
};

// Column-oriented sample store. All populated columns have equal length.
struct Dataset {
  DatasetSchema schema;
  std::vector<FieldColumn> fields;            // aligned with schema.fields
  std::vector<std::vector<double>> numeric;   // aligned with schema.numeric
  std::vector<std::vector<double>> labels;    // aligned with label_columns
  std::vector<double> target;
  std::vector<std::int64_t> timestamp;
  std::vector<std::int64_t> list_id;
  std::vector<std::int64_t> item_id;
  std::vector<double> weight;

  std::size_t size() const;
  // New dataset containing the given rows, in order.
  Dataset select(const std::vector<std::size_t>& rows) const;
  // Timestamp converted to whole days for row i.
  std::int64_t day(std::size_t i) const;
};

// Manifest: plain "key = value" lines, '#' comments. Keys: data, separator,
// multi_value_separator, header, columns, field, numeric, labels, target,
// timestamp, timestamp_unit, list_id, item_id, weight. Relative data paths
// resolve against the manifest's directory.
Dataset load_dataset(const std::string& manifest_path);

// Writes <dir>/<name>.csv and <dir>/<name>.manifest.
void write_dataset(const Dataset& data, const std::string& dir,
                   const std::string& name);

// Quantile discretizer for numeric features. Bucket index is the number of
// boundaries strictly below v, with ties going to the lower bucket
// (v == boundary stays below it).
class Bucketizer {
 public:
  Bucketizer() = default;
  explicit Bucketizer(std::vector<double> boundaries);

  // Boundaries at the k/num_buckets empirical quantiles (linear
  // interpolation between order statistics), deduplicated. A constant
  // column degenerates to zero boundaries.
  static Bucketizer fit(std::vector<double> values, std::size_t num_buckets);

  std::size_t bucket(double v) const;
  const std::vector<double>& boundaries() const { return bounds_; }
  std::size_t categories() const { return bounds_.size() + 1; }

 private:
  std::vector<double> bounds_;
};

// Fits one Bucketizer per numeric column on `train`, then rewrites the
// numeric columns of every given dataset into categorical fields (appended
// after the existing fields, enumerated vocabulary). Returns the fitted
// bucketizers in schema.numeric order.
std::vector<Bucketizer> bucketize_datasets(std::vector<Dataset*> datasets);
// Same rewrite with pre-fitted bucketizers (checkpoint reuse).
void apply_bucketizers(Dataset& data, const std::vector<Bucketizer>& fitted);

struct SplitSpec {
  enum class Mode { kFraction, kDayBoundary } mode = Mode::kFraction;
  double fraction = 0.8;          // leading share of time-ordered samples
  std::int64_t boundary_day = 0;  // train keeps day <= boundary
};

// Stable sort by timestamp, then prefix/suffix split. Either side empty is
// a configuration error.
std::pair<Dataset, Dataset> split_by_time(const Dataset& data,
                                          const SplitSpec& spec);

struct FunnelConfig {
  std::size_t n_lists = 20000;
  std::size_t list_size = 50;
  std::size_t n_users = 10000;
  std::size_t n_items = 5000;
  double base_ctr = 0.084;
  double base_cvr = 0.026;  // P(order | click)
  double base_atc = 0.30;   // P(add-to-cart | click)
  std::size_t latent_dim = 4;
  double affinity_scale = 1.0;
};

// Synthetic view -> click -> add-to-cart -> order funnel over latent
// user/item affinities. Stage intercepts are calibrated by bisection so the
// expected rates hit the configured targets exactly; labels respect the
// funnel (order implies atc implies click). Deterministic for a fixed seed.
Dataset generate_funnel(std::uint64_t seed, const FunnelConfig& cfg);
Dataset generate_funnel(std::uint64_t seed, std::size_t n_users,
                        std::size_t n_items, double base_ctr, double base_cvr);

}  // namespace resflow
