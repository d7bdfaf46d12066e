#include "gengnn/generators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>

#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

Graph gen_tree(int n, std::uint64_t seed) {
    if (n < 2) throw InvalidArgument("gen_tree: need n >= 2, got " + std::to_string(n));
    Graph g(n);
    if (n == 2) {
        g.set_edge(0, 1);
        return g;
    }
    Rng rng(seed);
    std::vector<int> prufer(static_cast<std::size_t>(n - 2));
    for (int& p : prufer) p = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));

    std::vector<int> degree(static_cast<std::size_t>(n), 1);
    for (int p : prufer) ++degree[static_cast<std::size_t>(p)];

    std::priority_queue<int, std::vector<int>, std::greater<>> leaves;
    for (int i = 0; i < n; ++i)
        if (degree[static_cast<std::size_t>(i)] == 1) leaves.push(i);

    for (int p : prufer) {
        const int leaf = leaves.top();
        leaves.pop();
        g.set_edge(leaf, p);
        if (--degree[static_cast<std::size_t>(p)] == 1) leaves.push(p);
    }
    const int u = leaves.top();
    leaves.pop();
    const int v = leaves.top();
    g.set_edge(u, v);
    return g;
}

namespace {

struct Point {
    double x, y;
};

struct Triangle {
    std::array<int, 3> v;
    double cx, cy, r2;  // circumcircle
};

bool circumcircle(const std::vector<Point>& p, std::array<int, 3> v, Triangle& out) {
    const Point& a = p[static_cast<std::size_t>(v[0])];
    const Point& b = p[static_cast<std::size_t>(v[1])];
    const Point& c = p[static_cast<std::size_t>(v[2])];
    const double bx = b.x - a.x, by = b.y - a.y;
    const double cx = c.x - a.x, cy = c.y - a.y;
    const double d = 2.0 * (bx * cy - by * cx);
    if (std::abs(d) < 1e-14) return false;
    const double b2 = bx * bx + by * by;
    const double c2 = cx * cx + cy * cy;
    const double ux = (cy * b2 - by * c2) / d;
    const double uy = (bx * c2 - cx * b2) / d;
    out = {v, a.x + ux, a.y + uy, ux * ux + uy * uy};
    return true;
}

bool all_collinear(const std::vector<Point>& p) {
    for (std::size_t k = 2; k < p.size(); ++k) {
        const double cross = (p[1].x - p[0].x) * (p[k].y - p[0].y) - (p[1].y - p[0].y) * (p[k].x - p[0].x);
        if (std::abs(cross) > 1e-9) return false;
    }
    return true;
}

// Bowyer-Watson; returns undirected edges between input points.
std::vector<std::pair<int, int>> delaunay_edges(std::vector<Point> pts) {
    const int n = static_cast<int>(pts.size());
    pts.push_back({0.5 - 20.0, -10.0});
    pts.push_back({0.5 + 20.0, -10.0});
    pts.push_back({0.5, 30.0});

    std::vector<Triangle> tris;
    Triangle super{};
    circumcircle(pts, {n, n + 1, n + 2}, super);
    tris.push_back(super);

    for (int k = 0; k < n; ++k) {
        const Point& q = pts[static_cast<std::size_t>(k)];
        std::vector<std::pair<int, int>> boundary;
        std::vector<Triangle> keep;
        keep.reserve(tris.size());
        for (const Triangle& t : tris) {
            const double dx = q.x - t.cx, dy = q.y - t.cy;
            if (dx * dx + dy * dy < t.r2) {
                for (int e = 0; e < 3; ++e) {
                    int a = t.v[static_cast<std::size_t>(e)];
                    int b = t.v[static_cast<std::size_t>((e + 1) % 3)];
                    if (a > b) std::swap(a, b);
                    auto it = std::find(boundary.begin(), boundary.end(), std::make_pair(a, b));
                    if (it != boundary.end())
                        boundary.erase(it);  // shared by two bad triangles: interior
                    else
                        boundary.emplace_back(a, b);
                }
            } else {
                keep.push_back(t);
            }
        }
        tris = std::move(keep);
        for (auto [a, b] : boundary) {
            Triangle t{};
            if (circumcircle(pts, {a, b, k}, t)) tris.push_back(t);
        }
    }

    std::vector<std::pair<int, int>> edges;
    for (const Triangle& t : tris) {
        for (int e = 0; e < 3; ++e) {
            int a = t.v[static_cast<std::size_t>(e)];
            int b = t.v[static_cast<std::size_t>((e + 1) % 3)];
            if (a >= n || b >= n) continue;
            if (a > b) std::swap(a, b);
            edges.emplace_back(a, b);
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

}  // namespace

Graph gen_planar(int n, std::uint64_t seed) {
    if (n < 3) throw InvalidArgument("gen_planar: need n >= 3, got " + std::to_string(n));
    Rng rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<Point> pts(static_cast<std::size_t>(n));
        for (Point& p : pts) p = {rng.uniform(), rng.uniform()};
        if (all_collinear(pts)) continue;
        Graph g(n);
        for (auto [a, b] : delaunay_edges(pts)) g.set_edge(a, b);
        if (is_connected(g)) return g;
    }
    throw NumericError("gen_planar: could not produce a connected triangulation");
}

Graph gen_sbm(const std::vector<int>& block_sizes, double p_in, double p_out, std::uint64_t seed) {
    auto valid_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!valid_prob(p_in) || !valid_prob(p_out))
        throw InvalidArgument("gen_sbm: probabilities must lie in [0,1]");
    if (!(p_out < p_in)) throw InvalidArgument("gen_sbm: need p_out < p_in");
    int total = 0;
    for (int b : block_sizes) {
        if (b < 1) throw InvalidArgument("gen_sbm: block sizes must be positive");
        total += b;
    }
    if (total < 2) throw InvalidArgument("gen_sbm: need at least 2 nodes");

    std::vector<int> block(static_cast<std::size_t>(total));
    int offset = 0;
    for (std::size_t b = 0; b < block_sizes.size(); ++b)
        for (int k = 0; k < block_sizes[b]; ++k) block[static_cast<std::size_t>(offset++)] = static_cast<int>(b);

    Rng rng(seed);
    Graph g(total);
    for (int i = 0; i < total; ++i)
        for (int j = i + 1; j < total; ++j) {
            const double p = block[static_cast<std::size_t>(i)] == block[static_cast<std::size_t>(j)] ? p_in : p_out;
            if (rng.bernoulli(p)) g.set_edge(i, j);
        }
    return g;
}

const std::vector<std::string>& dataset_kind_names() {
    static const std::vector<std::string> names{"tree", "planar", "sbm", "comm20"};
    return names;
}

DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "tree") return DatasetKind::tree;
    if (name == "planar") return DatasetKind::planar;
    if (name == "sbm") return DatasetKind::sbm;
    if (name == "comm20") return DatasetKind::comm20;
    throw InvalidArgument("unknown dataset kind '" + name + "' (expected one of: tree, planar, sbm, comm20)");
}

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::tree: return "tree";
        case DatasetKind::planar: return "planar";
        case DatasetKind::sbm: return "sbm";
        case DatasetKind::comm20: return "comm20";
    }
    return "unknown";
}

namespace {

int draw_between(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

Graph draw_sbm(const SbmParams& p, std::uint64_t seed) {
    if (p.min_blocks < 1 || p.max_blocks < p.min_blocks || p.min_block_size < 1 ||
        p.max_block_size < p.min_block_size)
        throw InvalidArgument("sbm: inconsistent block bounds");
    if (p.min_blocks * p.min_block_size > p.max_total || p.max_blocks * p.max_block_size < p.min_total)
        throw InvalidArgument("sbm: total-node range unreachable with the given block bounds");
    Rng rng(derive_seed(seed, 1));
    for (;;) {
        const int blocks = draw_between(rng, p.min_blocks, p.max_blocks);
        std::vector<int> sizes(static_cast<std::size_t>(blocks));
        int total = 0;
        for (int& s : sizes) {
            s = draw_between(rng, p.min_block_size, p.max_block_size);
            total += s;
        }
        if (total >= p.min_total && total <= p.max_total) return gen_sbm(sizes, p.p_in, p.p_out, derive_seed(seed, 2));
    }
}

}  // namespace

GraphSet generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.count < 0) throw InvalidArgument("dataset count must be nonnegative");
    GraphSet set;
    set.seed = seed;
    set.provenance = to_string(spec.kind);
    set.graphs.reserve(static_cast<std::size_t>(spec.count));
    for (int k = 0; k < spec.count; ++k) {
        const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k));
        switch (spec.kind) {
            case DatasetKind::tree: set.graphs.push_back(gen_tree(spec.nodes, s)); break;
            case DatasetKind::planar: set.graphs.push_back(gen_planar(spec.nodes, s)); break;
            case DatasetKind::sbm: set.graphs.push_back(draw_sbm(spec.sbm, s)); break;
            case DatasetKind::comm20: {
                Rng rng(derive_seed(s, 1));
                std::vector<int> sizes{draw_between(rng, spec.comm.min_block_size, spec.comm.max_block_size),
                                       draw_between(rng, spec.comm.min_block_size, spec.comm.max_block_size)};
                set.graphs.push_back(gen_sbm(sizes, spec.comm.p_in, spec.comm.p_out, derive_seed(s, 2)));
                break;
            }
        }
    }
    return set;
}

}  // namespace gengnn
