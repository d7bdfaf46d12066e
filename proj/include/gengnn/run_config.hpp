#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gengnn/denoiser.hpp"
#include "gengnn/diffusion.hpp"
#include "gengnn/generators.hpp"
#include "gengnn/trainer.hpp"

namespace gengnn {

// Everything `train` needs besides the data. Serialized as
//   {"dataset": "tree", "seed": 0,
//    "model": {...denoiser config...},
//    "diffusion": {"transition": "marginal", "steps": 500},
//    "train": {"epochs": 100, "batch_size": 64, "lr": 1e-4, ...}}
struct RunConfig {
    DatasetKind dataset = DatasetKind::tree;
    std::uint64_t seed = 0;  // parameter initialization
    DenoiserConfig model{};
    TransitionKind transition = TransitionKind::marginal;
    int diffusion_steps = 500;
    TrainOptions train{};
    int checkpoint_every = 25;  // epochs
    std::vector<std::string> disabled;
};

// Defaults of the published hyperparameter table for each dataset.
RunConfig preset_config(DatasetKind kind);

nlohmann::json to_json(const RunConfig& c);

// Keys missing from j take the preset of j["dataset"] (tree when absent).
// Throws ConfigError naming every offending key at once.
RunConfig run_config_from_json(const nlohmann::json& j);

// Key -> {"type", "default"} for every accepted key, with tree defaults.
nlohmann::json config_schema();

// Names accepted by apply_disable.
const std::vector<std::string>& component_names();

// Turns off the comma-separated components. Throws ConfigError listing the
// unknown names and the accepted ones.
void apply_disable(RunConfig& c, const std::string& list);

}  // namespace gengnn
