#include "gengnn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gengnn/diagnostics.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

using nlohmann::json;

SamplerMode parse_sampler_mode(const std::string& name) {
    if (name == "posterior") return SamplerMode::posterior;
    if (name == "rate") return SamplerMode::rate;
    throw ConfigError("unknown sampler '" + name + "' (expected posterior or rate)");
}

std::string to_string(SamplerMode m) { return m == SamplerMode::posterior ? "posterior" : "rate"; }

NodeCountSampler::NodeCountSampler(const GraphSet& data) {
    for (const Graph& g : data.graphs) ++hist_[g.n()];
    if (hist_.empty()) throw ContractError("node-count histogram of an empty dataset");
}

NodeCountSampler::NodeCountSampler(std::map<int, std::size_t> histogram) : hist_(std::move(histogram)) {
    if (hist_.empty()) throw ContractError("empty node-count histogram");
}

int NodeCountSampler::draw(Rng& rng) const {
    std::vector<double> w;
    std::vector<int> keys;
    for (const auto& [n, c] : hist_) {
        keys.push_back(n);
        w.push_back(static_cast<double>(c));
    }
    return keys[rng.categorical(w)];
}

std::vector<int> NodeCountSampler::draw_many(std::size_t count, std::uint64_t seed) const {
    Rng rng(derive_seed(seed, 0x6e6f646573ULL));
    std::vector<int> out(count);
    for (int& n : out) n = draw(rng);
    return out;
}

json NodeCountSampler::to_json() const {
    json j = json::array();
    for (const auto& [n, c] : hist_) j.push_back({n, c});
    return j;
}

NodeCountSampler NodeCountSampler::from_json(const json& j) {
    std::map<int, std::size_t> h;
    for (const auto& e : j) h[e.at(0).get<int>()] = e.at(1).get<std::size_t>();
    return NodeCountSampler(std::move(h));
}

json to_json(const Snapshot& s) {
    return json{{"chain", s.chain},   {"step", s.step},         {"noise", s.noise},         {"n", s.n},
                {"width", s.width},   {"noisy_width", s.noisy_width}, {"residual", s.residual}, {"x_in", s.x_in},
                {"g", s.g},           {"x_out", s.x_out},       {"layer_erank", s.layer_erank}, {"layer_numrank", s.layer_numrank}};
}

Snapshot snapshot_from_json(const json& j) {
    Snapshot s;
    s.chain = j.at("chain").get<int>();
    s.step = j.at("step").get<int>();
    s.noise = j.at("noise").get<double>();
    s.n = j.at("n").get<int>();
    s.width = j.at("width").get<int>();
    s.noisy_width = j.at("noisy_width").get<int>();
    s.residual = j.at("residual").get<bool>();
    s.x_in = j.at("x_in").get<std::vector<double>>();
    s.g = j.at("g").get<std::vector<double>>();
    s.x_out = j.at("x_out").get<std::vector<double>>();
    s.layer_erank = j.value("layer_erank", std::vector<double>{});
    s.layer_numrank = j.value("layer_numrank", std::vector<double>{});
    const auto cells = static_cast<std::size_t>(s.n) * static_cast<std::size_t>(s.width);
    if (s.x_in.size() != cells || s.g.size() != cells || s.x_out.size() != cells)
        throw SchemaError("snapshot matrices do not match n * width");
    return s;
}

void write_snapshots(const std::filesystem::path& path, const std::vector<Snapshot>& snaps) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const Snapshot& s : snaps) out << to_json(s).dump() << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Snapshot> read_snapshots(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Snapshot> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(snapshot_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
        }
    }
    return out;
}

namespace {

// Row-wise softmax of a [.., d] block into probabilities.
void softmax_rows(std::span<const double> logits, std::size_t d, std::vector<double>& out) {
    out.resize(logits.size());
    for (std::size_t r = 0; r < logits.size() / d; ++r) {
        const double* l = logits.data() + r * d;
        double* o = out.data() + r * d;
        double m = l[0];
        for (std::size_t k = 1; k < d; ++k) m = std::max(m, l[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < d; ++k) z += (o[k] = std::exp(l[k] - m));
        for (std::size_t k = 0; k < d; ++k) o[k] /= z;
    }
}

std::vector<double> slice_rows(const Tensor& t, int b, std::size_t per_batch) {
    const auto begin = t.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b) * per_batch);
    return {begin, begin + static_cast<std::ptrdiff_t>(per_batch)};
}

}  // namespace

SampleResult sample_graphs(const Denoiser& model, const TransitionFamily& fam, const std::vector<int>& node_counts,
                           const SampleOptions& opt) {
    const DenoiserConfig& cfg = model.config();
    if (cfg.node_classes != fam.node.classes() || cfg.edge_classes != fam.edge.classes())
        throw CompatibilityError("model predicts " + std::to_string(cfg.node_classes) + "/" + std::to_string(cfg.edge_classes) +
                                 " node/edge classes but the transitions have " + std::to_string(fam.node.classes()) + "/" +
                                 std::to_string(fam.edge.classes()));
    const int T = fam.schedule.steps();
    int steps = opt.steps > 0 ? opt.steps : T;
    if (opt.mode == SamplerMode::posterior && steps != T)
        throw InvalidArgument("posterior sampling runs the training schedule: steps must be " + std::to_string(T));
    if (opt.batch < 1) throw InvalidArgument("sampling batch must be >= 1");
    for (int n : node_counts)
        if (n < 1) throw InvalidArgument("cannot sample a graph with " + std::to_string(n) + " nodes");

    const std::size_t chains = node_counts.size();
    SampleResult res;
    res.graphs.resize(chains);
    std::vector<Rng> rngs;
    rngs.reserve(chains);
    for (std::size_t c = 0; c < chains; ++c) rngs.emplace_back(derive_seed(opt.seed, c));

    // Chains with equal node counts share a forward pass.
    std::vector<std::size_t> order(chains);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return node_counts[a] < node_counts[b]; });

    const int dx = cfg.node_classes, de = cfg.edge_classes;
    std::size_t pos = 0;
    while (pos < order.size()) {
        const int n = node_counts[order[pos]];
        std::vector<std::size_t> group;
        while (pos < order.size() && node_counts[order[pos]] == n && static_cast<int>(group.size()) < opt.batch) group.push_back(order[pos++]);
        const int B = static_cast<int>(group.size());
        std::vector<Graph> cur(group.size());
        for (int b = 0; b < B; ++b) cur[static_cast<std::size_t>(b)] = sample_limit(n, fam, rngs[group[static_cast<std::size_t>(b)]]);
        bool snap_group = false;
        for (std::size_t c : group) snap_group = snap_group || static_cast<int>(c) < opt.snapshot_chains;

        for (int k = 0; k < steps; ++k) {
            // Posterior mode walks t = T..1; rate mode walks flow time k/N, which
            // under the linear path equals alpha_bar, mapped back to a noise level.
            const int t = T - k;
            const double flow_t = static_cast<double>(k) / steps;
            const double noise = opt.mode == SamplerMode::posterior ? static_cast<double>(t) / T : fam.schedule.level_for_alpha_bar(flow_t);
            std::vector<const Graph*> ptrs;
            for (const Graph& g : cur) ptrs.push_back(&g);
            const DenoiserInput in = model.prepare(ptrs, std::vector<double>(group.size(), noise));
            const DenoiserOutput out = model.forward(in, false, nullptr, snap_group && opt.layer_ranks);
            std::vector<double> np, ep;
            softmax_rows(out.node_logits.data(), static_cast<std::size_t>(dx), np);
            softmax_rows(out.edge_logits.data(), static_cast<std::size_t>(de), ep);
            const auto un = static_cast<std::size_t>(n);
            const std::size_t node_block = un * static_cast<std::size_t>(dx), edge_block = un * un * static_cast<std::size_t>(de);
            for (int b = 0; b < B; ++b) {
                const std::size_t c = group[static_cast<std::size_t>(b)];
                const std::span<const double> pn(np.data() + static_cast<std::size_t>(b) * node_block, node_block);
                const std::span<const double> pe(ep.data() + static_cast<std::size_t>(b) * edge_block, edge_block);
                if (static_cast<int>(c) < opt.snapshot_chains) {
                    Snapshot s;
                    s.chain = static_cast<int>(c);
                    s.step = opt.mode == SamplerMode::posterior ? t : k;
                    s.noise = noise;
                    s.n = n;
                    s.width = out.x_in.dim(-1);
                    s.noisy_width = dx;
                    s.residual = cfg.flags.residual;
                    const std::size_t cells = un * static_cast<std::size_t>(s.width);
                    s.x_in = slice_rows(out.x_in, b, cells);
                    s.g = slice_rows(out.g, b, cells);
                    s.x_out = slice_rows(out.x_out, b, cells);
                    if (opt.layer_ranks) {
                        for (const LayerTrace& lt : out.trace) {
                            const auto hx = static_cast<std::size_t>(lt.x_next.dim(-1));
                            const Eigen::MatrixXd X = as_matrix(slice_rows(lt.x_next, b, un * hx), n, static_cast<int>(hx));
                            const bool zero = X.isZero(0.0);
                            s.layer_erank.push_back(zero ? 0.0 : erank(X));
                            s.layer_numrank.push_back(zero ? 0.0 : numrank(X));
                        }
                    }
                    res.snapshots.push_back(std::move(s));
                }
                Graph next = opt.mode == SamplerMode::posterior
                                 ? posterior_step(cur[static_cast<std::size_t>(b)], pn, pe, t, fam, rngs[c])
                                 : rate_step(cur[static_cast<std::size_t>(b)], pn, pe, flow_t, 1.0 / steps, rngs[c]);
                cur[static_cast<std::size_t>(b)] = std::move(next);
            }
        }
        for (int b = 0; b < B; ++b) res.graphs[group[static_cast<std::size_t>(b)]] = std::move(cur[static_cast<std::size_t>(b)]);
    }
    std::stable_sort(res.snapshots.begin(), res.snapshots.end(),
                     [](const Snapshot& a, const Snapshot& b) { return a.chain < b.chain; });
    return res;
}

}  // namespace gengnn
