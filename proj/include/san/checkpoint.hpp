#pragma once

#include <memory>
#include <string>

#include "san/datamodel.hpp"
#include "san/model.hpp"

namespace san {

// Versioned binary container: magic, a JSON header echoing the model and
// preprocessing configuration plus the tensor index, then raw little-endian
// doubles per tensor in index order.
void save_checkpoint(SanModel& model, const PreprocessOptions& prep,
                     const std::string& path);

struct LoadedCheckpoint {
  ModelConfig config;
  PreprocessOptions prep;
  std::unique_ptr<SanModel> model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Resume/soft-label compatibility: (q, d) always travel inside the config;
// C and M are checked against the manifest the checkpoint is about to be
// used with. Mismatches throw ConfigError.
void verify_checkpoint_against_manifest(const ModelConfig& config,
                                        const DatasetManifest& manifest,
                                        bool require_identities,
                                        bool require_attributes);

}  // namespace san
