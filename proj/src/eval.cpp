#include "gengnn/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "gengnn/errors.hpp"
#include "gengnn/graph_io.hpp"

namespace gengnn {

using nlohmann::json;

namespace {

std::vector<std::vector<int>> adjacency_lists(const Graph& g) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.n()));
    for (int i = 0; i < g.n(); ++i) adj[static_cast<std::size_t>(i)] = g.neighbors(i);
    return adj;
}

// Orbit of each member of a connected induced subgraph on 2..4 nodes, from its
// edge count and the member's degree inside the subgraph.
void record_orbits(const Graph& g, const std::vector<int>& nodes, OrbitCounts& out) {
    const std::size_t k = nodes.size();
    int deg[4] = {0, 0, 0, 0};
    int edges = 0;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            if (g.has_edge(nodes[a], nodes[b])) {
                ++deg[a];
                ++deg[b];
                ++edges;
            }
    auto add = [&](std::size_t a, int orbit) { ++out[static_cast<std::size_t>(nodes[a])][static_cast<std::size_t>(orbit)]; };
    for (std::size_t a = 0; a < k; ++a) {
        const int d = deg[a];
        if (k == 2) {
            add(a, 0);
        } else if (k == 3) {
            add(a, edges == 3 ? 3 : (d == 1 ? 1 : 2));
        } else {
            const int maxdeg = *std::max_element(deg, deg + 4);
            switch (edges) {
                case 3: add(a, maxdeg == 3 ? (d == 3 ? 7 : 6) : (d == 1 ? 4 : 5)); break;
                case 4: add(a, maxdeg == 2 ? 8 : (d == 1 ? 9 : d == 2 ? 10 : 11)); break;
                case 5: add(a, d == 2 ? 12 : 13); break;
                default: add(a, 14); break;
            }
        }
    }
}

// ESU enumeration: every connected induced subgraph with up to `size` nodes
// is visited once, rooted at its smallest node.
void extend(const Graph& g, const std::vector<std::vector<int>>& adj, std::vector<int>& sub, std::vector<int> ext, int root, int size,
            OrbitCounts& out) {
    if (sub.size() >= 2) record_orbits(g, sub, out);
    if (static_cast<int>(sub.size()) == size) return;
    while (!ext.empty()) {
        const int w = ext.back();
        ext.pop_back();
        std::vector<int> next = ext;
        for (int u : adj[static_cast<std::size_t>(w)]) {
            if (u <= root) continue;
            if (std::find(sub.begin(), sub.end(), u) != sub.end() || u == w) continue;
            bool exclusive = true;
            for (int s : sub)
                if (g.has_edge(s, u)) {
                    exclusive = false;
                    break;
                }
            if (exclusive && std::find(next.begin(), next.end(), u) == next.end()) next.push_back(u);
        }
        sub.push_back(w);
        extend(g, adj, sub, std::move(next), root, size, out);
        sub.pop_back();
    }
}

}  // namespace

OrbitCounts orbit_counts(const Graph& g) {
    OrbitCounts out(static_cast<std::size_t>(g.n()));
    for (auto& row : out) row.fill(0);
    const auto adj = adjacency_lists(g);
    for (int v = 0; v < g.n(); ++v) {
        std::vector<int> ext;
        for (int u : adj[static_cast<std::size_t>(v)])
            if (u > v) ext.push_back(u);
        std::vector<int> sub{v};
        extend(g, adj, sub, std::move(ext), v, 4, out);
    }
    return out;
}

std::vector<double> clustering_coefficients(const Graph& g) {
    std::vector<double> c(static_cast<std::size_t>(g.n()), 0.0);
    for (int i = 0; i < g.n(); ++i) {
        const auto nb = g.neighbors(i);
        const double d = static_cast<double>(nb.size());
        if (nb.size() < 2) continue;
        double tri = 0.0;
        for (std::size_t a = 0; a < nb.size(); ++a)
            for (std::size_t b = a + 1; b < nb.size(); ++b)
                if (g.has_edge(nb[a], nb[b])) tri += 1.0;
        c[static_cast<std::size_t>(i)] = 2.0 * tri / (d * (d - 1.0));
    }
    return c;
}

GraphStatistics graph_statistics(const Graph& g, int clustering_bins) {
    if (clustering_bins < 1) throw InvalidArgument("clustering histogram needs at least one bin");
    GraphStatistics s;
    s.degree_hist.assign(static_cast<std::size_t>(std::max(g.n(), 1)), 0.0);
    for (int d : g.degrees()) s.degree_hist[static_cast<std::size_t>(d)] += 1.0;
    s.clustering_hist.assign(static_cast<std::size_t>(clustering_bins), 0.0);
    for (double c : clustering_coefficients(g)) {
        const int bin = std::min(static_cast<int>(c * clustering_bins), clustering_bins - 1);
        s.clustering_hist[static_cast<std::size_t>(bin)] += 1.0;
    }
    s.orbits.assign(kOrbitCount - 4, 0.0);
    if (g.n() > 0) {
        for (const auto& row : orbit_counts(g))
            for (int o = 4; o < kOrbitCount; ++o) s.orbits[static_cast<std::size_t>(o - 4)] += static_cast<double>(row[static_cast<std::size_t>(o)]);
        for (double& v : s.orbits) v /= g.n();
    }
    return s;
}

const std::vector<Statistic>& all_statistics() {
    static const std::vector<Statistic> all{Statistic::degree, Statistic::clustering, Statistic::orbit};
    return all;
}

std::string to_string(Statistic s) {
    switch (s) {
        case Statistic::degree: return "degree";
        case Statistic::clustering: return "clustering";
        case Statistic::orbit: return "orbit";
    }
    return "unknown";
}

namespace {

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    const double sa = std::accumulate(a.begin(), a.end(), 0.0), sb = std::accumulate(b.begin(), b.end(), 0.0);
    double tv = 0.0;
    for (std::size_t k = 0; k < std::max(a.size(), b.size()); ++k) {
        const double pa = k < a.size() && sa > 0 ? a[k] / sa : 0.0;
        const double pb = k < b.size() && sb > 0 ? b[k] / sb : 0.0;
        tv += std::abs(pa - pb);
    }
    return 0.5 * tv;
}

}  // namespace

double statistic_kernel(Statistic s, const GraphStatistics& a, const GraphStatistics& b, double sigma) {
    double d2 = 0.0;
    if (s == Statistic::orbit) {
        for (std::size_t k = 0; k < std::max(a.orbits.size(), b.orbits.size()); ++k) {
            const double x = k < a.orbits.size() ? std::log1p(a.orbits[k]) : 0.0;
            const double y = k < b.orbits.size() ? std::log1p(b.orbits[k]) : 0.0;
            d2 += (x - y) * (x - y);
        }
    } else {
        const double tv = s == Statistic::degree ? total_variation(a.degree_hist, b.degree_hist)
                                                 : total_variation(a.clustering_hist, b.clustering_hist);
        d2 = tv * tv;
    }
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

double mmd(Statistic s, const std::vector<GraphStatistics>& a, const std::vector<GraphStatistics>& b, double sigma) {
    if (a.empty() || b.empty()) throw ContractError("mmd needs two nonempty sets");
    auto within = [&](const std::vector<GraphStatistics>& x) {
        if (x.size() == 1) return statistic_kernel(s, x[0], x[0], sigma);
        double sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = i + 1; j < x.size(); ++j) sum += statistic_kernel(s, x[i], x[j], sigma);
        return 2.0 * sum / (static_cast<double>(x.size()) * static_cast<double>(x.size() - 1));
    };
    double cross = 0.0;
    for (const auto& x : a)
        for (const auto& y : b) cross += statistic_kernel(s, x, y, sigma);
    cross /= static_cast<double>(a.size()) * static_cast<double>(b.size());
    return std::max(0.0, within(a) + within(b) - 2.0 * cross);
}

std::vector<GraphStatistics> statistics_of(const GraphSet& set) {
    std::vector<GraphStatistics> out;
    out.reserve(set.size());
    for (const Graph& g : set.graphs) out.push_back(graph_statistics(g));
    return out;
}

AvgRatio avg_ratio(const std::vector<GraphStatistics>& sampled, const std::vector<GraphStatistics>& reference,
                   const std::vector<GraphStatistics>& baseline) {
    AvgRatio r;
    for (Statistic s : all_statistics()) {
        const double num = mmd(s, sampled, reference);
        double den = mmd(s, baseline, reference);
        if (den < kRatioFloor) {
            std::ostringstream os;
            os << "avg_ratio: baseline MMD for " << to_string(s) << " is " << den << ", floored to " << kRatioFloor;
            r.notes.push_back(os.str());
            den = kRatioFloor;
        }
        r.ratios[to_string(s)] = num / den;
        r.mean += num / den;
    }
    r.mean /= static_cast<double>(all_statistics().size());
    return r;
}

bool is_tree(const Graph& g) { return g.n() > 0 && g.edge_count() == g.n() - 1 && is_connected(g); }

namespace {

// Left-right planarity test: DFS orientation with lowpoints and nesting
// depths, then a second DFS that maintains conflict pairs of return-edge
// intervals. Only the test is run; no embedding is built.
class LrPlanarity {
public:
    explicit LrPlanarity(const Graph& g) : n_(g.n()), adj_(adjacency_lists(g)) {
        height_.assign(static_cast<std::size_t>(n_), -1);
        parent_edge_.assign(static_cast<std::size_t>(n_), -1);
        edge_of_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), -1);
        out_.resize(static_cast<std::size_t>(n_));
    }

    bool run() {
        std::vector<int> roots;
        for (int v = 0; v < n_; ++v)
            if (height_[u(v)] < 0) {
                height_[u(v)] = 0;
                roots.push_back(v);
                orient(v);
            }
        for (auto& list : out_)
            std::stable_sort(list.begin(), list.end(), [&](int a, int b) { return nesting_[u(a)] < nesting_[u(b)]; });
        stack_bottom_.assign(src_.size(), -1);
        ref_.assign(src_.size(), -1);
        lowpt_edge_.assign(src_.size(), -1);
        for (int r : roots)
            if (!test(r)) return false;
        return true;
    }

private:
    struct Interval {
        int low = -1, high = -1;
        bool empty() const { return low < 0 && high < 0; }
    };
    struct Pair {
        Interval left, right;
        long id = 0;
    };

    static std::size_t u(int i) { return static_cast<std::size_t>(i); }

    void orient(int v) {
        const int e = parent_edge_[u(v)];
        for (int w : adj_[u(v)]) {
            if (edge_of_[u(v * n_ + w)] >= 0 || edge_of_[u(w * n_ + v)] >= 0) continue;
            const int vw = static_cast<int>(src_.size());
            src_.push_back(v);
            dst_.push_back(w);
            edge_of_[u(v * n_ + w)] = vw;
            out_[u(v)].push_back(vw);
            lowpt_.push_back(height_[u(v)]);
            lowpt2_.push_back(height_[u(v)]);
            nesting_.push_back(0);
            if (height_[u(w)] < 0) {
                parent_edge_[u(w)] = vw;
                height_[u(w)] = height_[u(v)] + 1;
                orient(w);
            } else {
                lowpt_[u(vw)] = height_[u(w)];
            }
            nesting_[u(vw)] = 2 * lowpt_[u(vw)] + (lowpt2_[u(vw)] < height_[u(v)] ? 1 : 0);
            if (e >= 0) {
                if (lowpt_[u(vw)] < lowpt_[u(e)]) {
                    lowpt2_[u(e)] = std::min(lowpt_[u(e)], lowpt2_[u(vw)]);
                    lowpt_[u(e)] = lowpt_[u(vw)];
                } else if (lowpt_[u(vw)] > lowpt_[u(e)]) {
                    lowpt2_[u(e)] = std::min(lowpt2_[u(e)], lowpt_[u(vw)]);
                } else {
                    lowpt2_[u(e)] = std::min(lowpt2_[u(e)], lowpt2_[u(vw)]);
                }
            }
        }
    }

    long top_id() const { return stack_.empty() ? -1 : stack_.back().id; }
    bool conflicting(const Interval& i, int b) const { return !i.empty() && lowpt_[u(i.high)] > lowpt_[u(b)]; }
    int lowest(const Pair& p) const {
        if (p.left.empty()) return lowpt_[u(p.right.low)];
        if (p.right.empty()) return lowpt_[u(p.left.low)];
        return std::min(lowpt_[u(p.left.low)], lowpt_[u(p.right.low)]);
    }
    void set_ref(int e, int value) {
        if (e >= 0) ref_[u(e)] = value;
    }

    bool test(int v) {
        const int e = parent_edge_[u(v)];
        const auto& list = out_[u(v)];
        for (std::size_t k = 0; k < list.size(); ++k) {
            const int ei = list[k];
            stack_bottom_[u(ei)] = top_id();
            if (ei == parent_edge_[u(dst_[u(ei)])]) {
                if (!test(dst_[u(ei)])) return false;
            } else {
                lowpt_edge_[u(ei)] = ei;
                stack_.push_back(Pair{Interval{}, Interval{ei, ei}, next_id_++});
            }
            if (lowpt_[u(ei)] < height_[u(v)]) {
                if (k == 0) {
                    lowpt_edge_[u(e)] = lowpt_edge_[u(ei)];
                } else if (!add_constraints(ei, e)) {
                    return false;
                }
            }
        }
        if (e >= 0) remove_back_edges(e);
        return true;
    }

    bool add_constraints(int ei, int e) {
        Pair p;
        do {
            Pair q = stack_.back();
            stack_.pop_back();
            if (!q.left.empty()) std::swap(q.left, q.right);
            if (!q.left.empty()) return false;
            if (lowpt_[u(q.right.low)] > lowpt_[u(e)]) {
                if (p.right.empty())
                    p.right.high = q.right.high;
                else
                    set_ref(p.right.low, q.right.high);
                p.right.low = q.right.low;
            } else {
                set_ref(q.right.low, lowpt_edge_[u(e)]);
            }
        } while (top_id() != stack_bottom_[u(ei)]);

        while (!stack_.empty() && (conflicting(stack_.back().left, ei) || conflicting(stack_.back().right, ei))) {
            Pair q = stack_.back();
            stack_.pop_back();
            if (conflicting(q.right, ei)) std::swap(q.left, q.right);
            if (conflicting(q.right, ei)) return false;
            set_ref(p.right.low, q.right.high);
            if (q.right.low >= 0) p.right.low = q.right.low;
            if (p.left.empty())
                p.left.high = q.left.high;
            else
                set_ref(p.left.low, q.left.high);
            p.left.low = q.left.low;
        }
        if (!p.left.empty() || !p.right.empty()) {
            p.id = next_id_++;
            stack_.push_back(p);
        }
        return true;
    }

    void remove_back_edges(int e) {
        const int parent = src_[u(e)];
        while (!stack_.empty() && lowest(stack_.back()) == height_[u(parent)]) stack_.pop_back();
        if (!stack_.empty()) {
            Pair& p = stack_.back();
            while (p.left.high >= 0 && dst_[u(p.left.high)] == parent) p.left.high = ref_[u(p.left.high)];
            if (p.left.high < 0 && p.left.low >= 0) {
                ref_[u(p.left.low)] = p.right.low;
                p.left.low = -1;
            }
            while (p.right.high >= 0 && dst_[u(p.right.high)] == parent) p.right.high = ref_[u(p.right.high)];
            if (p.right.high < 0 && p.right.low >= 0) {
                ref_[u(p.right.low)] = p.left.low;
                p.right.low = -1;
            }
        }
        if (lowpt_[u(e)] < height_[u(parent)] && !stack_.empty()) {
            const int hl = stack_.back().left.high, hr = stack_.back().right.high;
            ref_[u(e)] = (hl >= 0 && (hr < 0 || lowpt_[u(hl)] > lowpt_[u(hr)])) ? hl : hr;
        }
    }

    int n_;
    std::vector<std::vector<int>> adj_;
    std::vector<int> height_, parent_edge_, edge_of_;
    std::vector<std::vector<int>> out_;
    std::vector<int> src_, dst_, lowpt_, lowpt2_, nesting_;
    std::vector<int> ref_, lowpt_edge_;
    std::vector<long> stack_bottom_;
    std::vector<Pair> stack_;
    long next_id_ = 0;
};

}  // namespace

bool is_planar(const Graph& g) {
    const int n = g.n(), m = g.edge_count();
    if (n > 2 && m > 3 * n - 6) return false;
    return LrPlanarity(g).run();
}

namespace {

// Lloyd's k-means with farthest-first seeding; deterministic.
std::vector<int> kmeans(const Eigen::MatrixXd& pts, int k) {
    const int n = static_cast<int>(pts.rows());
    Eigen::MatrixXd centers(k, pts.cols());
    centers.row(0) = pts.row(0);
    Eigen::VectorXd dist = (pts.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        centers.row(c) = pts.row(far);
        dist = dist.cwiseMin((pts.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    std::vector<int> label(static_cast<std::size_t>(n), -1);
    for (int it = 0; it < 100; ++it) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (centers.rowwise() - pts.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (label[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
                label[static_cast<std::size_t>(i)] = static_cast<int>(best);
                changed = true;
            }
        }
        if (!changed) break;
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, pts.cols());
        std::vector<int> count(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            sum.row(label[static_cast<std::size_t>(i)]) += pts.row(i);
            ++count[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < k; ++c)
            if (count[static_cast<std::size_t>(c)] > 0) centers.row(c) = sum.row(c) / count[static_cast<std::size_t>(c)];
    }
    return label;
}

}  // namespace

bool is_valid_sbm(const Graph& g, const SbmParams& bounds) {
    const int n = g.n();
    if (n < 2 * bounds.min_block_size) return false;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (auto [i, j] : g.edges()) A(i, j) = A(j, i) = 1.0;
    Eigen::VectorXd dinv = A.rowwise().sum();
    for (int i = 0; i < n; ++i) dinv(i) = dinv(i) > 0 ? 1.0 / std::sqrt(dinv(i)) : 0.0;
    const Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n) - dinv.asDiagonal() * A * dinv.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    for (int k = bounds.min_blocks; k <= std::min(bounds.max_blocks, n); ++k) {
        Eigen::MatrixXd emb = es.eigenvectors().leftCols(k);
        for (int i = 0; i < n; ++i) {
            const double norm = emb.row(i).norm();
            if (norm > 0) emb.row(i) /= norm;
        }
        const std::vector<int> label = kmeans(emb, k);
        std::vector<int> size(static_cast<std::size_t>(k), 0);
        for (int l : label) ++size[static_cast<std::size_t>(l)];
        bool sizes_ok = true;
        for (int s : size) sizes_ok = sizes_ok && s >= bounds.min_block_size && s <= bounds.max_block_size;
        if (!sizes_ok) continue;
        double in_edges = 0, in_pairs = 0, out_edges = 0, out_pairs = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const bool same = label[static_cast<std::size_t>(i)] == label[static_cast<std::size_t>(j)];
                (same ? in_pairs : out_pairs) += 1;
                if (g.has_edge(i, j)) (same ? in_edges : out_edges) += 1;
            }
        const double p_in = in_pairs > 0 ? in_edges / in_pairs : 0.0, p_out = out_pairs > 0 ? out_edges / out_pairs : 0.0;
        if (p_in > 2.0 * p_out) return true;
    }
    return false;
}

const ValenceTable& default_valences() {
    static const ValenceTable table{{"C", 4}, {"N", 3}, {"O", 2}, {"F", 1}, {"H", 1}};
    return table;
}

bool is_valid_molecule(const Graph& g, const std::vector<std::string>& atom_types, const ValenceTable& valences) {
    std::vector<int> cap(static_cast<std::size_t>(g.n()));
    for (int i = 0; i < g.n(); ++i) {
        const int t = g.node_type(i);
        if (t >= static_cast<int>(atom_types.size()))
            throw SchemaError("node class " + std::to_string(t) + " has no atom type (" + std::to_string(atom_types.size()) + " given)");
        const auto it = valences.find(atom_types[static_cast<std::size_t>(t)]);
        if (it == valences.end()) throw SchemaError("unknown atom type '" + atom_types[static_cast<std::size_t>(t)] + "'");
        cap[static_cast<std::size_t>(i)] = it->second;
    }
    for (int i = 0; i < g.n(); ++i) {
        int bonds = 0;
        for (int j = 0; j < g.n(); ++j) bonds += g.edge_type(i, j);
        if (bonds > cap[static_cast<std::size_t>(i)]) return false;
    }
    return g.n() > 0 && is_connected(g);
}

ValidityFn validity_for(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::tree: return [](const Graph& g) { return is_tree(g); };
        case DatasetKind::planar: return [](const Graph& g) { return is_connected(g) && is_planar(g); };
        case DatasetKind::sbm: return [](const Graph& g) { return is_valid_sbm(g); };
        case DatasetKind::comm20: return [](const Graph& g) { return g.n() > 0 && is_connected(g); };
    }
    throw InvalidArgument("no validity predicate for this dataset kind");
}

VunReport vun(const GraphSet& sampled, const GraphSet& train, const ValidityFn& valid) {
    if (sampled.empty()) throw ContractError("vun of an empty sample set");
    std::set<std::uint64_t> train_hashes;
    for (const Graph& g : train.graphs) train_hashes.insert(wl_hash(g));
    std::set<std::uint64_t> seen;
    double n_valid = 0, n_unique = 0, n_novel = 0, n_vun = 0;
    for (const Graph& g : sampled.graphs) {
        if (!valid(g)) continue;
        n_valid += 1;
        const std::uint64_t h = wl_hash(g);
        const bool unique = seen.insert(h).second;
        const bool novel = train_hashes.count(h) == 0;
        n_unique += unique;
        n_novel += novel;
        n_vun += unique && novel;
    }
    VunReport r;
    const double total = static_cast<double>(sampled.size());
    r.validity = 100.0 * n_valid / total;
    r.uniqueness = n_valid > 0 ? 100.0 * n_unique / n_valid : 0.0;
    r.novelty = n_valid > 0 ? 100.0 * n_novel / n_valid : 0.0;
    r.vun = 100.0 * n_vun / total;
    return r;
}

void MetricReport::check() const {
    for (auto [name, v] : {std::pair{"validity", vun.validity}, std::pair{"uniqueness", vun.uniqueness}, std::pair{"novelty", vun.novelty},
                           std::pair{"vun", vun.vun}})
        if (!(v >= 0.0 && v <= 100.0)) throw ContractError(std::string("metric report: ") + name + " = " + std::to_string(v) + " outside [0,100]");
    if (vun.vun > std::min({vun.validity, vun.uniqueness, vun.novelty}) + 1e-9)
        throw ContractError("metric report: vun exceeds one of validity, uniqueness, novelty");
}

json to_json(const MetricReport& r) {
    json j{{"format_version", MetricReport::kFormatVersion},
           {"sample_set", r.sample_set},
           {"reference_set", r.reference_set},
           {"seeds", r.seeds},
           {"mmd", r.mmd},
           {"ratios", r.ratios},
           {"avg_ratio", r.avg_ratio ? json(*r.avg_ratio) : json(nullptr)},
           {"validity", r.vun.validity},
           {"uniqueness", r.vun.uniqueness},
           {"novelty", r.vun.novelty},
           {"vun", r.vun.vun},
           {"magdiff", r.magdiff ? json(*r.magdiff) : json(nullptr)},
           {"notes", r.notes}};
    return j;
}

MetricReport metric_report_from_json(const json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != MetricReport::kFormatVersion)
            throw CompatibilityError("metric report format version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(MetricReport::kFormatVersion) + ")");
        MetricReport r;
        r.sample_set = j.at("sample_set").get<std::string>();
        r.reference_set = j.at("reference_set").get<std::string>();
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        r.mmd = j.at("mmd").get<std::map<std::string, double>>();
        r.ratios = j.value("ratios", std::map<std::string, double>{});
        if (!j.at("avg_ratio").is_null()) r.avg_ratio = j.at("avg_ratio").get<double>();
        r.vun.validity = j.at("validity").get<double>();
        r.vun.uniqueness = j.at("uniqueness").get<double>();
        r.vun.novelty = j.at("novelty").get<double>();
        r.vun.vun = j.at("vun").get<double>();
        if (j.contains("magdiff") && !j.at("magdiff").is_null()) r.magdiff = j.at("magdiff").get<double>();
        r.notes = j.value("notes", std::vector<std::string>{});
        return r;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("metric report: ") + e.what());
    }
}

namespace {

const std::vector<std::string>& numeric_columns() {
    static const std::vector<std::string> cols{"mmd_degree",  "mmd_clustering", "mmd_orbit", "ratio_degree", "ratio_clustering",
                                               "ratio_orbit", "avg_ratio",      "validity",  "uniqueness",   "novelty",
                                               "vun",         "magdiff"};
    return cols;
}

std::vector<std::optional<double>> numeric_values(const MetricReport& r) {
    auto find = [](const std::map<std::string, double>& m, const std::string& k) -> std::optional<double> {
        const auto it = m.find(k);
        return it == m.end() ? std::nullopt : std::optional<double>(it->second);
    };
    return {find(r.mmd, "degree"),      find(r.mmd, "clustering"), find(r.mmd, "orbit"), find(r.ratios, "degree"),
            find(r.ratios, "clustering"), find(r.ratios, "orbit"),  r.avg_ratio,          r.vun.validity,
            r.vun.uniqueness,            r.vun.novelty,             r.vun.vun,            r.magdiff};
}

void write_value(std::ostream& os, const std::optional<double>& v) {
    if (v) os << *v;
}

}  // namespace

std::string metric_csv(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "sample_set,reference_set,seeds";
    for (const auto& c : numeric_columns()) os << ',' << c;
    os << '\n';
    for (const MetricReport& r : reports) {
        os << r.sample_set << ',' << r.reference_set << ',';
        for (std::size_t k = 0; k < r.seeds.size(); ++k) os << (k ? ";" : "") << r.seeds[k];
        for (const auto& v : numeric_values(r)) {
            os << ',';
            write_value(os, v);
        }
        os << '\n';
    }
    return os.str();
}

std::string fold_summary_csv(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw ContractError("fold summary of no reports");
    std::ostringstream os;
    os << std::setprecision(12);
    os << "stat";
    for (const auto& c : numeric_columns()) os << ',' << c;
    os << '\n';
    std::vector<std::vector<double>> cols(numeric_columns().size());
    for (const MetricReport& r : reports) {
        const auto vals = numeric_values(r);
        for (std::size_t c = 0; c < vals.size(); ++c)
            if (vals[c]) cols[c].push_back(*vals[c]);
    }
    for (const char* stat : {"mean", "std"}) {
        os << stat;
        for (const auto& v : cols) {
            os << ',';
            if (v.empty()) continue;
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            if (std::string(stat) == "mean") {
                os << mean;
            } else {
                double ss = 0.0;
                for (double x : v) ss += (x - mean) * (x - mean);
                os << (v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0);
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace gengnn
