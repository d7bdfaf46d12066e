#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "gengnn/graph.hpp"

namespace gengnn {

// One graph per line:
//   {"n": 3, "node_types": [0,0,0], "edges": [[0,1,1],[1,2,1]],
//    "node_classes": 1, "edge_classes": 2, "y": [..]}
// "edges" lists each undirected edge once as [i, j, type] with type >= 1.
// "node_classes"/"edge_classes" are optional on input; when absent they are
// inferred from the largest category seen across the file. "y" is optional.

std::string graph_to_json_line(const Graph& g);
Graph graph_from_json_line(const std::string& line, long line_number = 0);

void write_jsonl(const GraphSet& set, const std::filesystem::path& path);
void write_jsonl(const GraphSet& set, std::ostream& out);
GraphSet read_jsonl(const std::filesystem::path& path);
GraphSet read_jsonl(std::istream& in);

// Weisfeiler-Lehman color refinement hash. Initial colors come from node
// types; each round hashes a node's color with the sorted multiset of
// (edge type, neighbor color) pairs. The graph hash combines the sorted color
// multisets of every round. Isomorphic graphs always collide; 1-WL-equivalent
// non-isomorphic graphs (e.g. C6 vs 2xC3) collide as well.
std::uint64_t wl_hash(const Graph& g, int iterations = 3);

}  // namespace gengnn
