#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gengnn/denoiser.hpp"
#include "gengnn/diffusion.hpp"
#include "gengnn/run_config.hpp"
#include "gengnn/sampler.hpp"

namespace gengnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void add_gen(CLI::App& app);
void add_train(CLI::App& app);
void add_sample(CLI::App& app);
void add_eval(CLI::App& app);
void add_diagnose(CLI::App& app);

std::string utc_timestamp();

std::string read_file(const fs::path& p);
json read_json_file(const fs::path& p);
// Refuses to replace an existing file.
void write_new_file(const fs::path& p, const std::string& content);
// Atomic replace through a temporary file; used only for run.json.
void replace_file(const fs::path& p, const std::string& content);

// First free base/prefix-NNN (starting at 001), with an optional suffix.
fs::path next_versioned(const fs::path& base, const std::string& prefix, const std::string& suffix = "");
// Highest existing base/prefix-NNN<suffix>, or empty.
fs::path latest_versioned(const fs::path& base, const std::string& prefix, const std::string& suffix = "");

// run.json is the only file of a run directory that is rewritten.
json load_run(const fs::path& dir);
void save_run(const fs::path& dir, json record);
void add_artifact(const fs::path& dir, const std::string& kind, const std::string& relpath);

json to_json(const Marginals& m);
Marginals marginals_from_json(const json& j);

// A trained model restored from a run directory.
struct LoadedModel {
    RunConfig config;
    Denoiser model;
    TransitionFamily family;
    NodeCountSampler node_counts;
    fs::path checkpoint;
};

// Uses dir/model.json unless a checkpoint path is given. Throws
// CompatibilityError when the checkpoint config differs from the run config.
LoadedModel load_model(const fs::path& run_dir, const fs::path& checkpoint = {});

std::string relative_to(const fs::path& p, const fs::path& base);

}  // namespace gengnn::cli
