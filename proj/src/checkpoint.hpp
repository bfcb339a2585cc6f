#pragma once

#include <string>

#include "model.hpp"

// Checkpoints are a pair of files: `<base>.json`, a manifest listing the
// model configuration plus parameter names, shapes, and byte offsets, and
// `<base>.bin`, one blob of little-endian f64 values in manifest order.

namespace smr {

void saveCheckpoint(const std::string& base, const Model& model);

// Loads weights into an existing model; every model parameter must be
// present with a matching shape.
void loadCheckpointInto(const std::string& base, Model& model);

// Reconstructs the model from the manifest's stored configuration.
Model loadCheckpoint(const std::string& base);

}  // namespace smr
