// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "diffcom/codec/pipeline.hpp"

namespace diffcom::train {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary container: "DCKP" magic, u32 format version, JSON config blob,
// then named f64 tensors (weights and Adam moments). Writes go through a
// temp file and an atomic rename.
void save_checkpoint(const std::string& path, const codec::CodecModel& model);
std::unique_ptr<codec::CodecModel> load_checkpoint(const std::string& path);

// Declarative JSON config (model + optional training block).
codec::ModelConfig model_config_from_json_file(const std::string& path);
void model_config_to_json_file(const std::string& path, const codec::ModelConfig& cfg);

std::string model_config_to_json(const codec::ModelConfig& cfg);
codec::ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace diffcom::train
