#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "resflow/model.hpp"

namespace resflow {

// Checkpoint layout: 8-byte magic, little-endian u32 format version, a
// length-prefixed plain-text manifest (mode, graph, tower, schema,
// bucketizers), a length-prefixed float32 blob of tower parameters in
// registration order, then per field a length-prefixed (id, vector) list
// plus the default vector. All floats are 32-bit little-endian; loading a
// different version is an error, not a reinterpretation.

struct LoadedModel {
  std::unique_ptr<ParamStore> params;
  std::unique_ptr<EmbeddingVocab> vocab;
  std::unique_ptr<MultiTaskModel> model;
  std::vector<std::pair<std::string, Bucketizer>> bucketizers;
};

void save_checkpoint(
    const std::string& path, const MultiTaskModel& model,
    const std::vector<std::pair<std::string, Bucketizer>>& bucketizers = {});

LoadedModel load_checkpoint(const std::string& path);

}  // namespace resflow
