#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gengnn {

// Dense categorical graph. Node and edge types are stored as category indices;
// the one-hot tensors X (n x dx) and E (n x n x de) are derived on demand, so
// the one-hot invariant holds by construction. Edge category 0 is "no edge".
class Graph {
public:
    Graph() = default;
    Graph(int n, int node_classes = 1, int edge_classes = 2);

    int n() const noexcept { return n_; }
    int node_classes() const noexcept { return dx_; }
    int edge_classes() const noexcept { return de_; }

    int node_type(int i) const { return node_types_[static_cast<std::size_t>(i)]; }
    void set_node_type(int i, int type);

    int edge_type(int i, int j) const { return edge_types_[index(i, j)]; }
    bool has_edge(int i, int j) const { return edge_type(i, j) != 0; }
    // Sets both (i,j) and (j,i). Self-loops are rejected.
    void set_edge(int i, int j, int type = 1);

    const std::vector<double>& y() const noexcept { return y_; }
    void set_y(std::vector<double> y) { y_ = std::move(y); }

    int edge_count() const;
    // Undirected edges as (i, j) with i < j, in row-major order.
    std::vector<std::pair<int, int>> edges() const;
    std::vector<int> degrees() const;
    std::vector<int> neighbors(int i) const;

    std::vector<double> node_onehot() const;  // n * dx, row-major
    std::vector<double> edge_onehot() const;  // n * n * de, row-major
    std::vector<double> adjacency() const;    // n * n, 1 where an edge of any type exists

    // perm[i] is the new index of node i.
    Graph permuted(std::span<const int> perm) const;

    // Throws ContractError if any structural invariant is broken.
    void check_invariants() const;

    const std::vector<int>& node_types() const noexcept { return node_types_; }
    const std::vector<int>& edge_types() const noexcept { return edge_types_; }

    friend bool operator==(const Graph& a, const Graph& b) = default;

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j);
    }

    int n_ = 0;
    int dx_ = 1;
    int de_ = 2;
    std::vector<int> node_types_;
    std::vector<int> edge_types_;
    std::vector<double> y_;
};

struct GraphSet {
    std::vector<Graph> graphs;
    std::string provenance = "unspecified";  // train / val / test / sampled / ...
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return graphs.size(); }
    bool empty() const noexcept { return graphs.empty(); }
    // Throws SchemaError if graphs disagree on category counts.
    void check_consistent() const;
};

bool is_connected(const Graph& g);
int connected_components(const Graph& g);

// Classic small graphs used throughout tests and examples.
Graph complete_graph(int n);
Graph path_graph(int n);
Graph cycle_graph(int n);
Graph star_graph(int leaves);
Graph complete_bipartite(int a, int b);
Graph disjoint_union(const Graph& a, const Graph& b);

}  // namespace gengnn
