#include "gengnn/graph.hpp"

#include <numeric>

#include "gengnn/errors.hpp"

namespace gengnn {

Graph::Graph(int n, int node_classes, int edge_classes)
    : n_(n), dx_(node_classes), de_(edge_classes) {
    if (n < 0) throw InvalidArgument("graph size must be nonnegative, got " + std::to_string(n));
    if (node_classes < 1) throw InvalidArgument("graph needs at least one node class");
    if (edge_classes < 2) throw InvalidArgument("graph needs at least two edge classes (no-edge + edge)");
    node_types_.assign(static_cast<std::size_t>(n), 0);
    edge_types_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
}

void Graph::set_node_type(int i, int type) {
    if (i < 0 || i >= n_) throw InvalidArgument("node index out of range: " + std::to_string(i));
    if (type < 0 || type >= dx_) throw InvalidArgument("node type out of range: " + std::to_string(type));
    node_types_[static_cast<std::size_t>(i)] = type;
}

void Graph::set_edge(int i, int j, int type) {
    if (i < 0 || i >= n_ || j < 0 || j >= n_)
        throw InvalidArgument("edge endpoint out of range: (" + std::to_string(i) + "," + std::to_string(j) + ")");
    if (type < 0 || type >= de_) throw InvalidArgument("edge type out of range: " + std::to_string(type));
    if (i == j) {
        if (type != 0) throw InvalidArgument("self-loops are not allowed (node " + std::to_string(i) + ")");
        return;
    }
    edge_types_[index(i, j)] = type;
    edge_types_[index(j, i)] = type;
}

int Graph::edge_count() const {
    int count = 0;
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j)
            if (has_edge(i, j)) ++count;
    return count;
}

std::vector<std::pair<int, int>> Graph::edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j)
            if (has_edge(i, j)) out.emplace_back(i, j);
    return out;
}

std::vector<int> Graph::degrees() const {
    std::vector<int> deg(static_cast<std::size_t>(n_), 0);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
            if (has_edge(i, j)) ++deg[static_cast<std::size_t>(i)];
    return deg;
}

std::vector<int> Graph::neighbors(int i) const {
    std::vector<int> out;
    for (int j = 0; j < n_; ++j)
        if (has_edge(i, j)) out.push_back(j);
    return out;
}

std::vector<double> Graph::node_onehot() const {
    std::vector<double> x(static_cast<std::size_t>(n_) * static_cast<std::size_t>(dx_), 0.0);
    for (int i = 0; i < n_; ++i)
        x[static_cast<std::size_t>(i * dx_ + node_type(i))] = 1.0;
    return x;
}

std::vector<double> Graph::edge_onehot() const {
    std::vector<double> e(edge_types_.size() * static_cast<std::size_t>(de_), 0.0);
    for (std::size_t k = 0; k < edge_types_.size(); ++k)
        e[k * static_cast<std::size_t>(de_) + static_cast<std::size_t>(edge_types_[k])] = 1.0;
    return e;
}

std::vector<double> Graph::adjacency() const {
    std::vector<double> a(edge_types_.size(), 0.0);
    for (std::size_t k = 0; k < edge_types_.size(); ++k) a[k] = edge_types_[k] != 0 ? 1.0 : 0.0;
    return a;
}

Graph Graph::permuted(std::span<const int> perm) const {
    if (static_cast<int>(perm.size()) != n_) throw InvalidArgument("permutation length does not match node count");
    Graph out(n_, dx_, de_);
    out.y_ = y_;
    for (int i = 0; i < n_; ++i) out.node_types_[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = node_type(i);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
            out.edge_types_[out.index(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)])] = edge_type(i, j);
    return out;
}

void Graph::check_invariants() const {
    if (node_types_.size() != static_cast<std::size_t>(n_) ||
        edge_types_.size() != static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_))
        throw ContractError("graph storage does not match node count");
    for (int i = 0; i < n_; ++i) {
        if (node_type(i) < 0 || node_type(i) >= dx_) throw ContractError("node type out of range at " + std::to_string(i));
        if (edge_type(i, i) != 0) throw ContractError("self-loop at node " + std::to_string(i));
        for (int j = 0; j < n_; ++j) {
            if (edge_type(i, j) != edge_type(j, i))
                throw ContractError("asymmetric edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
            if (edge_type(i, j) < 0 || edge_type(i, j) >= de_) throw ContractError("edge type out of range");
        }
    }
}

void GraphSet::check_consistent() const {
    if (graphs.empty()) return;
    const int dx = graphs.front().node_classes();
    const int de = graphs.front().edge_classes();
    for (std::size_t k = 0; k < graphs.size(); ++k) {
        if (graphs[k].node_classes() != dx || graphs[k].edge_classes() != de)
            throw SchemaError("graph " + std::to_string(k) + " has category counts (" +
                              std::to_string(graphs[k].node_classes()) + "," + std::to_string(graphs[k].edge_classes()) +
                              "), expected (" + std::to_string(dx) + "," + std::to_string(de) + ")");
    }
}

namespace {

std::vector<int> component_labels(const Graph& g, int& count) {
    const int n = g.n();
    std::vector<int> label(static_cast<std::size_t>(n), -1);
    std::vector<int> stack;
    count = 0;
    for (int s = 0; s < n; ++s) {
        if (label[static_cast<std::size_t>(s)] >= 0) continue;
        label[static_cast<std::size_t>(s)] = count;
        stack.push_back(s);
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v = 0; v < n; ++v) {
                if (g.has_edge(u, v) && label[static_cast<std::size_t>(v)] < 0) {
                    label[static_cast<std::size_t>(v)] = count;
                    stack.push_back(v);
                }
            }
        }
        ++count;
    }
    return label;
}

}  // namespace

int connected_components(const Graph& g) {
    int count = 0;
    component_labels(g, count);
    return count;
}

bool is_connected(const Graph& g) { return g.n() > 0 && connected_components(g) == 1; }

Graph complete_graph(int n) {
    Graph g(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) g.set_edge(i, j);
    return g;
}

Graph path_graph(int n) {
    Graph g(n);
    for (int i = 0; i + 1 < n; ++i) g.set_edge(i, i + 1);
    return g;
}

Graph cycle_graph(int n) {
    Graph g = path_graph(n);
    if (n >= 3) g.set_edge(n - 1, 0);
    return g;
}

Graph star_graph(int leaves) {
    Graph g(leaves + 1);
    for (int i = 1; i <= leaves; ++i) g.set_edge(0, i);
    return g;
}

Graph complete_bipartite(int a, int b) {
    Graph g(a + b);
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j) g.set_edge(i, a + j);
    return g;
}

Graph disjoint_union(const Graph& a, const Graph& b) {
    if (a.node_classes() != b.node_classes() || a.edge_classes() != b.edge_classes())
        throw SchemaError("disjoint_union: category counts differ");
    Graph g(a.n() + b.n(), a.node_classes(), a.edge_classes());
    for (int i = 0; i < a.n(); ++i) {
        g.set_node_type(i, a.node_type(i));
        for (int j = i + 1; j < a.n(); ++j) g.set_edge(i, j, a.edge_type(i, j));
    }
    for (int i = 0; i < b.n(); ++i) {
        g.set_node_type(a.n() + i, b.node_type(i));
        for (int j = i + 1; j < b.n(); ++j) g.set_edge(a.n() + i, a.n() + j, b.edge_type(i, j));
    }
    return g;
}

}  // namespace gengnn
