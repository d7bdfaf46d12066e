#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gengnn/denoiser.hpp"
#include "gengnn/diffusion.hpp"
#include "gengnn/graph.hpp"

namespace gengnn {

class Rng;

enum class SamplerMode { posterior, rate };

SamplerMode parse_sampler_mode(const std::string& name);
std::string to_string(SamplerMode m);

// Node counts drawn from the empirical training histogram.
class NodeCountSampler {
public:
    NodeCountSampler() = default;
    explicit NodeCountSampler(const GraphSet& data);
    explicit NodeCountSampler(std::map<int, std::size_t> histogram);

    int draw(Rng& rng) const;
    std::vector<int> draw_many(std::size_t count, std::uint64_t seed) const;
    const std::map<int, std::size_t>& histogram() const { return hist_; }

    nlohmann::json to_json() const;
    static NodeCountSampler from_json(const nlohmann::json& j);

private:
    std::map<int, std::size_t> hist_;
};

// Per-step record of one chain, taken from the denoiser call at that step.
struct Snapshot {
    int chain = 0;
    int step = 0;        // reverse-step index: T..1 for posterior, 0..N-1 for rate
    double noise = 0.0;  // noise level given to the model
    int n = 0;
    int width = 0;        // dx + K
    int noisy_width = 0;  // dx; the remaining columns are the encoding
    bool residual = true;
    std::vector<double> x_in, g, x_out;  // n * width, row-major
    std::vector<double> layer_erank, layer_numrank;
};

nlohmann::json to_json(const Snapshot& s);
Snapshot snapshot_from_json(const nlohmann::json& j);
void write_snapshots(const std::filesystem::path& path, const std::vector<Snapshot>& snaps);
std::vector<Snapshot> read_snapshots(const std::filesystem::path& path);

struct SampleOptions {
    SamplerMode mode = SamplerMode::posterior;
    int steps = 0;  // 0 = schedule length; posterior mode requires the schedule length
    int batch = 8;
    std::uint64_t seed = 0;
    int snapshot_chains = 0;  // the first k chains record a snapshot at every step
    bool layer_ranks = true;  // per-layer ERank/NumRank in snapshots
};

struct SampleResult {
    std::vector<Graph> graphs;
    std::vector<Snapshot> snapshots;
};

// Runs one reverse chain per entry of node_counts, starting from the limiting
// distribution. Chain c draws from its own stream derive_seed(seed, c).
SampleResult sample_graphs(const Denoiser& model, const TransitionFamily& fam, const std::vector<int>& node_counts,
                           const SampleOptions& opt);

}  // namespace gengnn
