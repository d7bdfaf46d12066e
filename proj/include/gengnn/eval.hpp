#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gengnn/generators.hpp"
#include "gengnn/graph.hpp"

namespace gengnn {

// Per-node counts of the 15 orbits of connected graphlets on 2..4 nodes
// (0 edge; 1-2 path; 3 triangle; 4-5 P4; 6-7 star; 8 C4; 9-11 paw; 12-13
// diamond; 14 K4).
constexpr int kOrbitCount = 15;
using OrbitCounts = std::vector<std::array<long, kOrbitCount>>;
OrbitCounts orbit_counts(const Graph& g);

std::vector<double> clustering_coefficients(const Graph& g);

struct GraphStatistics {
    std::vector<double> degree_hist;      // counts for degrees 0..n-1
    std::vector<double> clustering_hist;  // counts over clustering_bins bins of [0,1]
    std::vector<double> orbits;           // mean per-node count of the 4-node orbits 4..14
};

GraphStatistics graph_statistics(const Graph& g, int clustering_bins = 100);

enum class Statistic { degree, clustering, orbit };
const std::vector<Statistic>& all_statistics();
std::string to_string(Statistic s);

// Gaussian kernel over total variation of normalized histograms (degree and
// clustering) or over L2 of log1p orbit means.
double statistic_kernel(Statistic s, const GraphStatistics& a, const GraphStatistics& b, double sigma = 1.0);

// Unbiased MMD^2 clamped at 0. A set of size one contributes its kernel
// self-similarity instead of the (undefined) off-diagonal mean. Throws
// ContractError on an empty set.
double mmd(Statistic s, const std::vector<GraphStatistics>& a, const std::vector<GraphStatistics>& b, double sigma = 1.0);

std::vector<GraphStatistics> statistics_of(const GraphSet& set);

struct AvgRatio {
    std::map<std::string, double> ratios;
    double mean = 0.0;
    std::vector<std::string> notes;  // floored denominators
};

constexpr double kRatioFloor = 1e-6;
AvgRatio avg_ratio(const std::vector<GraphStatistics>& sampled, const std::vector<GraphStatistics>& reference,
                   const std::vector<GraphStatistics>& baseline);

bool is_tree(const Graph& g);
// Left-right planarity test.
bool is_planar(const Graph& g);
// Spectral split into 2..5 blocks; valid iff some split has block sizes within
// the generator bounds and fitted p_in > 2 p_out.
bool is_valid_sbm(const Graph& g, const SbmParams& bounds = {});

using ValenceTable = std::map<std::string, int>;
const ValenceTable& default_valences();
// Node class k is atom_types[k]; edge class k is bond order k. Throws
// SchemaError naming an atom type missing from the table.
bool is_valid_molecule(const Graph& g, const std::vector<std::string>& atom_types, const ValenceTable& valences = default_valences());

using ValidityFn = std::function<bool(const Graph&)>;
// tree: is_tree; planar: connected and planar; sbm: is_valid_sbm; comm20: connected.
ValidityFn validity_for(DatasetKind kind);

struct VunReport {
    double validity = 0.0;    // % of samples
    double uniqueness = 0.0;  // % of valid samples, first occurrence of a hash counts
    double novelty = 0.0;     // % of valid samples absent from train
    double vun = 0.0;         // % of samples that are valid, unique and novel
};

VunReport vun(const GraphSet& sampled, const GraphSet& train, const ValidityFn& valid);

struct MetricReport {
    static constexpr int kFormatVersion = 1;

    std::string sample_set;
    std::string reference_set;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, double> mmd;
    std::map<std::string, double> ratios;
    std::optional<double> avg_ratio;
    VunReport vun;
    std::optional<double> magdiff;
    std::vector<std::string> notes;

    // Throws ContractError on percentages outside [0,100] or vun above its parts.
    void check() const;
};

nlohmann::json to_json(const MetricReport& r);
// Throws CompatibilityError on a different format version, SchemaError on
// missing fields.
MetricReport metric_report_from_json(const nlohmann::json& j);

// Header plus one row per report.
std::string metric_csv(const std::vector<MetricReport>& reports);
// Header plus mean and std rows over the numeric columns.
std::string fold_summary_csv(const std::vector<MetricReport>& reports);

}  // namespace gengnn
