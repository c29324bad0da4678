#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "config.hpp"
#include "trainer.hpp"

namespace monosfm::train {

// Archive layout (torch::serialize): "config" holds the resolved run config as
// a JSON string, "depth" / "pose" the module parameters and buffers,
// "optimizer" the optimiser state when present, "state" the epoch/step counters.
void save_checkpoint(const std::filesystem::path& path, const config::RunConfig& cfg, const Models& models,
                     const torch::optim::Optimizer* optimizer, const TrainState& state);

struct Checkpoint {
  config::RunConfig cfg;
  Models models;
  TrainState state;
};

// Rebuilds the networks from the stored config and loads their weights.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loads weights (and optimiser state, when given) into existing models. The
// stored architecture must equal `cfg`'s, otherwise ConfigError("model").
TrainState load_checkpoint_into(const std::filesystem::path& path, const config::RunConfig& cfg, Models& models,
                                torch::optim::Optimizer* optimizer = nullptr);

config::RunConfig read_checkpoint_config(const std::filesystem::path& path);

// manifest.json: config hash, code version, seed, dataset fingerprint, outputs.
void write_manifest(const std::filesystem::path& dir, const config::RunConfig& cfg, const std::string& command,
                    const std::string& dataset_fingerprint, const std::vector<std::string>& outputs,
                    const nlohmann::json& extra = nlohmann::json::object());

}  // namespace monosfm::train
