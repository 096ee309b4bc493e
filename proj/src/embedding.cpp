#include "resflow/embedding.hpp"

#include <cmath>

namespace resflow {

EmbeddingVocab::EmbeddingVocab(std::vector<FieldSpec> fields,
                               std::int64_t min_count)
    : fields_(std::move(fields)), min_count_(min_count) {
  if (min_count_ < 0) throw UsageError("EmbeddingVocab: min_count must be >= 0");
  stats_.resize(fields_.size());
}

void EmbeddingVocab::bump(std::size_t f, std::int64_t id, std::int64_t day) {
  Stats& s = stats_[f][id];
  ++s.count;
  if (day > s.last_seen_day) s.last_seen_day = day;
}

void EmbeddingVocab::observe(const Dataset& data) {
  if (frozen_) throw UsageError("EmbeddingVocab: observe after freeze");
  if (data.schema.fields.size() != fields_.size())
    throw UsageError("EmbeddingVocab: dataset schema does not match");
  const std::size_t n = data.size();
  for (std::size_t f = 0; f < fields_.size(); ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t day = data.timestamp.empty() ? 0 : data.day(i);
      if (fields_[f].multi_value) {
        for (std::int64_t id : data.fields[f].multi[i]) bump(f, id, day);
      } else {
        const std::int64_t id = data.fields[f].single[i];
        if (id != kMissingId) bump(f, id, day);
      }
    }
  }
}

void EmbeddingVocab::evict(std::int64_t current_day,
                           std::int64_t window_days) {
  if (frozen_) throw UsageError("EmbeddingVocab: evict after freeze");
  for (auto& field_stats : stats_)
    for (auto it = field_stats.begin(); it != field_stats.end();)
      if (current_day - it->second.last_seen_day > window_days)
        it = field_stats.erase(it);
      else
        ++it;
}

void EmbeddingVocab::freeze() {
  if (frozen_) return;
  ids_.resize(fields_.size());
  rows_.resize(fields_.size());
  for (std::size_t f = 0; f < fields_.size(); ++f) {
    for (const auto& [id, st] : stats_[f]) {
      if (fields_[f].counted && st.count <= min_count_) continue;
      rows_[f].emplace(id, ids_[f].size());
      ids_[f].push_back(id);
    }
  }
  frozen_ = true;
}

const std::vector<std::int64_t>& EmbeddingVocab::ids(std::size_t f) const {
  if (!frozen_) throw UsageError("EmbeddingVocab: not frozen yet");
  return ids_[f];
}

std::size_t EmbeddingVocab::row_of(std::size_t f, std::int64_t id) const {
  if (!frozen_) throw UsageError("EmbeddingVocab: not frozen yet");
  auto it = rows_[f].find(id);
  return it == rows_[f].end() ? default_row(f) : it->second;
}

std::int64_t EmbeddingVocab::count_of(std::size_t f, std::int64_t id) const {
  auto it = stats_[f].find(id);
  return it == stats_[f].end() ? 0 : it->second.count;
}

bool EmbeddingVocab::contains(std::size_t f, std::int64_t id) const {
  if (!frozen_) throw UsageError("EmbeddingVocab: not frozen yet");
  return rows_[f].count(id) != 0;
}

EmbeddingVocab EmbeddingVocab::restore(
    std::vector<FieldSpec> fields, std::int64_t min_count,
    std::vector<std::vector<std::int64_t>> ids) {
  EmbeddingVocab v(std::move(fields), min_count);
  if (ids.size() != v.fields_.size())
    throw UsageError("EmbeddingVocab::restore: field count mismatch");
  v.ids_ = std::move(ids);
  v.rows_.resize(v.fields_.size());
  for (std::size_t f = 0; f < v.fields_.size(); ++f)
    for (std::size_t r = 0; r < v.ids_[f].size(); ++r)
      v.rows_[f].emplace(v.ids_[f][r], r);
  v.frozen_ = true;
  return v;
}

EmbeddingLayer make_embedding(ParamStore& params, Rng& rng,
                              const EmbeddingVocab& vocab, std::size_t dim) {
  if (!vocab.frozen()) throw UsageError("make_embedding: vocab not frozen");
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingLayer layer;
  layer.dim = dim;
  const double limit = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t f = 0; f < vocab.field_count(); ++f) {
    Mat table(vocab.entries(f) + 1, dim);
    for (double& v : table.raw()) v = rng.uniform(-limit, limit);
    layer.tables.push_back(
        params.add("emb." + vocab.field(f).name, std::move(table)));
  }
  return layer;
}

ValueId embed_batch(Tape& tape, const EmbeddingLayer& layer,
                    const EmbeddingVocab& vocab, const Dataset& data,
                    const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>* field_subset) {
  if (layer.tables.size() != vocab.field_count())
    throw UsageError("embed_batch: layer/vocab mismatch");
  std::vector<std::size_t> all_fields;
  if (!field_subset) {
    all_fields.resize(vocab.field_count());
    for (std::size_t f = 0; f < all_fields.size(); ++f) all_fields[f] = f;
    field_subset = &all_fields;
  }
  std::vector<ValueId> parts;
  parts.reserve(field_subset->size());
  for (std::size_t f : *field_subset) {
    if (f >= vocab.field_count())
      throw UsageError("embed_batch: field index out of range");
    if (vocab.field(f).multi_value) {
      std::vector<std::vector<std::size_t>> groups(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& members = data.fields[f].multi[rows[i]];
        groups[i].reserve(members.size());
        for (std::int64_t id : members) groups[i].push_back(vocab.row_of(f, id));
      }
      parts.push_back(tape.gather_sum_rows(layer.tables[f], std::move(groups)));
    } else {
      std::vector<std::size_t> idx(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::int64_t id = data.fields[f].single[rows[i]];
        idx[i] = id == kMissingId ? vocab.default_row(f) : vocab.row_of(f, id);
      }
      parts.push_back(tape.gather_rows(layer.tables[f], std::move(idx)));
    }
  }
  if (parts.empty()) throw UsageError("embed_batch: no fields selected");
  return parts.size() == 1 ? parts[0] : tape.concat(parts);
}

std::vector<double> lookup_concat(const ParamStore& params,
                                  const EmbeddingLayer& layer,
                                  const EmbeddingVocab& vocab,
                                  const Dataset& data, std::size_t row) {
  std::vector<double> out;
  out.reserve(vocab.field_count() * layer.dim);
  for (std::size_t f = 0; f < vocab.field_count(); ++f) {
    const Mat& table = params.value(layer.tables[f]);
    std::vector<double> acc(layer.dim, 0.0);
    if (vocab.field(f).multi_value) {
      for (std::int64_t id : data.fields[f].multi[row]) {
        const double* r = table.row_ptr(vocab.row_of(f, id));
        for (std::size_t j = 0; j < layer.dim; ++j) acc[j] += r[j];
      }
    } else {
      const std::int64_t id = data.fields[f].single[row];
      const std::size_t tr =
          id == kMissingId ? vocab.default_row(f) : vocab.row_of(f, id);
      const double* r = table.row_ptr(tr);
      for (std::size_t j = 0; j < layer.dim; ++j) acc[j] = r[j];
    }
    out.insert(out.end(), acc.begin(), acc.end());
  }
  return out;
}

}  // namespace resflow
