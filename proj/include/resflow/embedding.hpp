#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "resflow/autograd.hpp"
#include "resflow/data.hpp"

namespace resflow {

// Per-field id vocabulary with occurrence counting and day-based eviction.
// Lifecycle: observe one or more datasets, optionally evict, then freeze to
// assign table rows. Ids below the admission threshold (and all ids unseen
// at freeze time) route to the field's default row.
class EmbeddingVocab {
 public:
  // min_count: a counted-policy id is admitted when count > min_count.
  EmbeddingVocab(std::vector<FieldSpec> fields, std::int64_t min_count = 1);

  void observe(const Dataset& data);
  // Drops ids whose last sighting is more than `window_days` before
  // `current_day`; their counts reset. No-op on frozen vocabularies.
  void evict(std::int64_t current_day, std::int64_t window_days);
  void freeze();
  bool frozen() const { return frozen_; }

  std::size_t field_count() const { return fields_.size(); }
  const FieldSpec& field(std::size_t f) const { return fields_[f]; }
  std::int64_t min_count() const { return min_count_; }

  // Admitted ids in ascending order (stable across runs).
  const std::vector<std::int64_t>& ids(std::size_t f) const;
  std::size_t entries(std::size_t f) const { return ids(f).size(); }
  // Table row for an id; unknown ids land on default_row(f).
  std::size_t row_of(std::size_t f, std::int64_t id) const;
  std::size_t default_row(std::size_t f) const { return ids(f).size(); }

  std::int64_t count_of(std::size_t f, std::int64_t id) const;
  bool contains(std::size_t f, std::int64_t id) const;

  // Rebuild a frozen vocabulary from checkpoint data.
  static EmbeddingVocab restore(std::vector<FieldSpec> fields,
                                std::int64_t min_count,
                                std::vector<std::vector<std::int64_t>> ids);

 private:
  struct Stats {
    std::int64_t count = 0;
    std::int64_t last_seen_day = 0;
  };
  void bump(std::size_t f, std::int64_t id, std::int64_t day);

  std::vector<FieldSpec> fields_;
  std::int64_t min_count_;
  // Ordered maps keep freeze() deterministic without an extra sort.
  std::vector<std::map<std::int64_t, Stats>> stats_;
  std::vector<std::vector<std::int64_t>> ids_;
  std::vector<std::map<std::int64_t, std::size_t>> rows_;
  bool frozen_ = false;
};

// One embedding table parameter per field, shaped (entries + 1) x dim; the
// extra last row is the learnable default vector. Values start uniform in
// +/- 1/sqrt(dim).
struct EmbeddingLayer {
  std::size_t dim = 0;
  std::vector<ParamId> tables;
};

EmbeddingLayer make_embedding(ParamStore& params, Rng& rng,
                              const EmbeddingVocab& vocab, std::size_t dim);

// Batched lookup: per field, single-value -> table row (default row when
// missing/unknown), multi-value -> sum of member rows; fields concatenated
// in schema order. Output is rows.size() x (#fields * dim). A non-null
// `field_subset` restricts and orders the concatenated fields (twin-tower
// input split).
ValueId embed_batch(Tape& tape, const EmbeddingLayer& layer,
                    const EmbeddingVocab& vocab, const Dataset& data,
                    const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>* field_subset = nullptr);

// Single-sample convenience: the concatenated input vector as plain values.
std::vector<double> lookup_concat(const ParamStore& params,
                                  const EmbeddingLayer& layer,
                                  const EmbeddingVocab& vocab,
                                  const Dataset& data, std::size_t row);

}  // namespace resflow
