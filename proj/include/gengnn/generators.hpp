#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gengnn/graph.hpp"

namespace gengnn {

// Uniform random labeled tree via a random Prufer sequence.
Graph gen_tree(int n, std::uint64_t seed);

// Delaunay triangulation of n uniform points in the unit square.
Graph gen_planar(int n, std::uint64_t seed);

// Stochastic block model; within-block pairs connect with p_in, across with p_out.
Graph gen_sbm(const std::vector<int>& block_sizes, double p_in, double p_out, std::uint64_t seed);

struct SbmParams {
    int min_blocks = 2;
    int max_blocks = 5;
    int min_block_size = 10;
    int max_block_size = 40;
    double p_in = 0.3;
    double p_out = 0.05;
    // Benchmark node-count range; block sizes are redrawn until the total lands inside.
    int min_total = 44;
    int max_total = 187;
};

// Comm20-like data: two communities, each of 6..10 nodes.
struct CommunityParams {
    int min_block_size = 6;
    int max_block_size = 10;
    double p_in = 0.3;
    double p_out = 0.05;
};

enum class DatasetKind { tree, planar, sbm, comm20 };

DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);
const std::vector<std::string>& dataset_kind_names();

struct DatasetSpec {
    DatasetKind kind = DatasetKind::tree;
    int count = 0;
    int nodes = 64;  // tree / planar size
    SbmParams sbm{};
    CommunityParams comm{};
};

// Graph k of the set uses derive_seed(seed, k), so sets are reproducible and
// each graph can be generated independently.
GraphSet generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace gengnn
