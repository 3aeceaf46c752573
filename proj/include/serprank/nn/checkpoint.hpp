#pragma once

#include <string>

#include "json.hpp"
#include "serprank/nn/mlp.hpp"
#include "serprank/nn/vae.hpp"

namespace serprank::nn {

inline constexpr int kCheckpointFormatVersion = 1;

// All tensors serialize as flat row-major arrays of 64-bit reals; the JSON
// writer emits shortest round-trip representations, so a load restores forward
// outputs bit-exactly.
nlohmann::ordered_json to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const ModelState& state);
ModelState model_state_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const VaeSpec& spec);
VaeSpec vae_spec_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const VaeState& state);
VaeState vae_state_from_json(const nlohmann::json& j);

// Wraps a payload with {"format_version": ..., "kind": ..., "payload": ...}.
nlohmann::ordered_json make_checkpoint(const std::string& kind,
                                       nlohmann::ordered_json payload);
// Returns the payload; throws CheckpointError on version or kind mismatch.
nlohmann::json open_checkpoint(const nlohmann::json& doc, const std::string& kind);

// Write to a temp file then rename, so readers never observe a torn file.
void write_json_atomic(const std::string& path, const nlohmann::ordered_json& doc);
nlohmann::json read_json_file(const std::string& path);

}  // namespace serprank::nn
