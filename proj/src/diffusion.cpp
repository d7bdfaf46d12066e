#include "gengnn/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

TransitionKind parse_transition_kind(const std::string& name) {
    if (name == "marginal") return TransitionKind::marginal;
    if (name == "absorbing") return TransitionKind::absorbing;
    if (name == "absorb_first" || name == "absorbfirst") return TransitionKind::absorb_first;
    throw ConfigError("unknown transition '" + name + "' (expected marginal, absorbing or absorb_first)");
}

std::string to_string(TransitionKind k) {
    switch (k) {
        case TransitionKind::marginal: return "marginal";
        case TransitionKind::absorbing: return "absorbing";
        case TransitionKind::absorb_first: return "absorb_first";
    }
    return "unknown";
}

namespace {

double cosine_f(double u, double s) {
    const double c = std::cos(0.5 * std::numbers::pi * (u + s) / (1.0 + s));
    return c * c;
}

}  // namespace

NoiseSchedule::NoiseSchedule(int steps, double s) : steps_(steps), s_(s) {
    if (steps < 1) throw InvalidArgument("noise schedule needs at least one step");
    alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
    const double f0 = cosine_f(0.0, s);
    for (int t = 0; t <= steps; ++t)
        alpha_bar_[static_cast<std::size_t>(t)] = std::clamp(cosine_f(static_cast<double>(t) / steps, s) / f0, 0.0, 1.0);
    alpha_bar_[0] = 1.0;
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps_) throw InvalidArgument("timestep " + std::to_string(t) + " outside [0," + std::to_string(steps_) + "]");
    return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha(int t) const {
    if (t < 1 || t > steps_) throw InvalidArgument("timestep " + std::to_string(t) + " outside [1," + std::to_string(steps_) + "]");
    const double prev = alpha_bar_[static_cast<std::size_t>(t - 1)];
    return prev > 0.0 ? alpha_bar_[static_cast<std::size_t>(t)] / prev : 0.0;
}

double NoiseSchedule::level_for_alpha_bar(double ab) const {
    ab = std::clamp(ab, 0.0, 1.0);
    const double c = std::sqrt(ab * cosine_f(0.0, s_));
    const double u = std::acos(c) * 2.0 / std::numbers::pi * (1.0 + s_) - s_;
    return std::clamp(u, 0.0, 1.0);
}

CategoricalTransition::CategoricalTransition(std::vector<double> limit) : limit_(std::move(limit)) {
    if (limit_.empty()) throw ContractError("transition needs at least one class");
    double total = 0.0;
    for (double p : limit_) {
        if (!(p >= 0.0)) throw ContractError("transition limit has a negative or NaN entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractError("transition limit sums to " + std::to_string(total) + ", not 1");
}

double CategoricalTransition::entry(int from, int to, double a) const {
    return (from == to ? a : 0.0) + (1.0 - a) * limit_[static_cast<std::size_t>(to)];
}

std::vector<double> CategoricalTransition::row(int from, double a) const {
    std::vector<double> r(limit_.size());
    for (int j = 0; j < classes(); ++j) r[static_cast<std::size_t>(j)] = entry(from, j, a);
    return r;
}

std::vector<double> CategoricalTransition::matrix(double a) const {
    const int d = classes();
    std::vector<double> m(static_cast<std::size_t>(d * d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m[static_cast<std::size_t>(i * d + j)] = entry(i, j, a);
    return m;
}

Marginals dataset_marginals(const GraphSet& data) {
    if (data.empty()) throw ContractError("marginals of an empty dataset");
    data.check_consistent();
    Marginals m;
    m.node.assign(static_cast<std::size_t>(data.graphs[0].node_classes()), 0.0);
    m.edge.assign(static_cast<std::size_t>(data.graphs[0].edge_classes()), 0.0);
    double nodes = 0.0, pairs = 0.0;
    for (const Graph& g : data.graphs) {
        for (int i = 0; i < g.n(); ++i) {
            m.node[static_cast<std::size_t>(g.node_type(i))] += 1.0;
            for (int j = i + 1; j < g.n(); ++j) m.edge[static_cast<std::size_t>(g.edge_type(i, j))] += 1.0;
        }
        nodes += g.n();
        pairs += 0.5 * g.n() * (g.n() - 1);
    }
    if (nodes > 0)
        for (double& v : m.node) v /= nodes;
    else
        m.node[0] = 1.0;
    if (pairs > 0)
        for (double& v : m.edge) v /= pairs;
    else
        m.edge[0] = 1.0;
    return m;
}

TransitionFamily TransitionFamily::make(TransitionKind kind, int steps, const Marginals& m) {
    auto absorbing = [](std::size_t d) {
        std::vector<double> v(d, 0.0);
        v[0] = 1.0;
        return v;
    };
    std::vector<double> node = m.node, edge = m.edge;
    if (kind == TransitionKind::absorbing) node = absorbing(node.size());
    if (kind != TransitionKind::marginal) edge = absorbing(edge.size());
    return TransitionFamily{kind, NoiseSchedule(steps), CategoricalTransition(std::move(node)), CategoricalTransition(std::move(edge))};
}

namespace {

void check_classes(const Graph& g, const TransitionFamily& fam) {
    if (g.node_classes() != fam.node.classes() || g.edge_classes() != fam.edge.classes())
        throw ShapeError("graph has " + std::to_string(g.node_classes()) + "/" + std::to_string(g.edge_classes()) +
                         " node/edge classes, transitions have " + std::to_string(fam.node.classes()) + "/" +
                         std::to_string(fam.edge.classes()));
}

}  // namespace

Graph forward_noise(const Graph& g0, int t, const TransitionFamily& fam, Rng& rng) {
    check_classes(g0, fam);
    const double ab = fam.schedule.alpha_bar(t);
    if (t == 0) return g0;
    Graph out(g0.n(), g0.node_classes(), g0.edge_classes());
    out.set_y(g0.y());
    for (int i = 0; i < g0.n(); ++i) out.set_node_type(i, static_cast<int>(rng.categorical(fam.node.row(g0.node_type(i), ab))));
    for (int i = 0; i < g0.n(); ++i)
        for (int j = i + 1; j < g0.n(); ++j) {
            const int e = static_cast<int>(rng.categorical(fam.edge.row(g0.edge_type(i, j), ab)));
            if (e != 0) out.set_edge(i, j, e);
        }
    return out;
}

Graph sample_limit(int n, const TransitionFamily& fam, Rng& rng) {
    Graph out(n, fam.node.classes(), fam.edge.classes());
    for (int i = 0; i < n; ++i) out.set_node_type(i, static_cast<int>(rng.categorical(fam.node.limit())));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const int e = static_cast<int>(rng.categorical(fam.edge.limit()));
            if (e != 0) out.set_edge(i, j, e);
        }
    return out;
}

LossTerms training_loss(const Tensor& node_logits, const Tensor& edge_logits, const std::vector<const Graph*>& clean,
                        double lambda_edge) {
    const int B = static_cast<int>(clean.size());
    if (B == 0) throw ContractError("training loss of an empty batch");
    const int n = clean[0]->n(), dx = clean[0]->node_classes(), de = clean[0]->edge_classes();
    if (node_logits.shape() != Shape{B, n, dx} || edge_logits.shape() != Shape{B, n, n, de})
        throw ShapeError("training loss: logits " + shape_str(node_logits.shape()) + " / " + shape_str(edge_logits.shape()) +
                         " do not match a batch of " + std::to_string(B) + " graphs with n=" + std::to_string(n));
    for (const Tensor* t : {&node_logits, &edge_logits})
        for (double v : t->data())
            if (!std::isfinite(v)) throw NumericError("training loss: non-finite logit");

    const auto un = static_cast<std::size_t>(n);
    const double node_w = 1.0 / (static_cast<double>(B) * n);
    const double pairs = 0.5 * n * (n - 1);
    const double edge_w = pairs > 0 ? 1.0 / (static_cast<double>(B) * pairs) : 0.0;
    std::vector<double> xt(static_cast<std::size_t>(B) * un * static_cast<std::size_t>(dx), 0.0);
    std::vector<double> et(static_cast<std::size_t>(B) * un * un * static_cast<std::size_t>(de), 0.0);
    for (int b = 0; b < B; ++b) {
        const Graph& g = *clean[static_cast<std::size_t>(b)];
        if (g.n() != n || g.node_classes() != dx || g.edge_classes() != de) throw ShapeError("training loss: batch graphs differ in shape");
        const auto ub = static_cast<std::size_t>(b);
        for (int i = 0; i < n; ++i) {
            xt[(ub * un + static_cast<std::size_t>(i)) * static_cast<std::size_t>(dx) + static_cast<std::size_t>(g.node_type(i))] = -node_w;
            for (int j = i + 1; j < n; ++j)
                et[((ub * un + static_cast<std::size_t>(i)) * un + static_cast<std::size_t>(j)) * static_cast<std::size_t>(de) +
                   static_cast<std::size_t>(g.edge_type(i, j))] = -edge_w;
        }
    }
    LossTerms out;
    const Tensor node_ce = sum_all(mul(log_softmax(node_logits), Tensor({B, n, dx}, std::move(xt))));
    const Tensor edge_ce = sum_all(mul(log_softmax(edge_logits), Tensor({B, n, n, de}, std::move(et))));
    out.node_ce = node_ce.item();
    out.edge_ce = edge_ce.item();
    out.total = add(node_ce, scale(edge_ce, lambda_edge));
    return out;
}

namespace {

void check_distribution(std::span<const double> p, const char* what) {
    double total = 0.0;
    for (double v : p) {
        if (!(v >= -1e-12)) throw ContractError(std::string(what) + ": negative or NaN probability");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ContractError(std::string(what) + ": probabilities sum to " + std::to_string(total));
}

}  // namespace

std::vector<double> posterior_distribution(const CategoricalTransition& tr, const NoiseSchedule& sched, int t, int x_t,
                                           std::span<const double> p0) {
    const int d = tr.classes();
    if (static_cast<int>(p0.size()) != d) throw ShapeError("posterior: prediction has the wrong number of classes");
    check_distribution(p0, "posterior");
    const double a = sched.alpha(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    std::vector<double> q(static_cast<std::size_t>(d));
    double used = 0.0;
    for (int x0 = 0; x0 < d; ++x0) {
        const double w = p0[static_cast<std::size_t>(x0)];
        if (w <= 0.0) continue;
        double z = 0.0;
        for (int k = 0; k < d; ++k) {
            q[static_cast<std::size_t>(k)] = tr.entry(k, x_t, a) * tr.entry(x0, k, ab_prev);
            z += q[static_cast<std::size_t>(k)];
        }
        if (z <= 0.0) continue;
        for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(k)] += w * q[static_cast<std::size_t>(k)] / z;
        used += w;
    }
    if (used <= 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        out[static_cast<std::size_t>(x_t)] = 1.0;
        return out;
    }
    for (double& v : out) v /= used;
    return out;
}

namespace {

void check_probs_shape(const Graph& g, std::span<const double> node_probs, std::span<const double> edge_probs, const char* what) {
    const auto n = static_cast<std::size_t>(g.n());
    if (node_probs.size() != n * static_cast<std::size_t>(g.node_classes()) ||
        edge_probs.size() != n * n * static_cast<std::size_t>(g.edge_classes()))
        throw ShapeError(std::string(what) + ": prediction sizes do not match the graph");
}

template <class Dist>
Graph step_graph(const Graph& g, std::span<const double> node_probs, std::span<const double> edge_probs, Rng& rng, Dist dist) {
    const int n = g.n(), dx = g.node_classes(), de = g.edge_classes();
    Graph out(n, dx, de);
    out.set_y(g.y());
    for (int i = 0; i < n; ++i) {
        const auto p = dist(true, g.node_type(i), node_probs.subspan(static_cast<std::size_t>(i * dx), static_cast<std::size_t>(dx)));
        out.set_node_type(i, static_cast<int>(rng.categorical(p)));
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const auto off = static_cast<std::size_t>((i * n + j) * de);
            const auto p = dist(false, g.edge_type(i, j), edge_probs.subspan(off, static_cast<std::size_t>(de)));
            const int e = static_cast<int>(rng.categorical(p));
            if (e != 0) out.set_edge(i, j, e);
        }
    return out;
}

}  // namespace

Graph posterior_step(const Graph& g_t, std::span<const double> node_probs, std::span<const double> edge_probs, int t,
                     const TransitionFamily& fam, Rng& rng) {
    check_classes(g_t, fam);
    check_probs_shape(g_t, node_probs, edge_probs, "posterior step");
    return step_graph(g_t, node_probs, edge_probs, rng, [&](bool node, int x, std::span<const double> p) {
        return posterior_distribution(node ? fam.node : fam.edge, fam.schedule, t, x, p);
    });
}

std::vector<double> rate_distribution(int x, std::span<const double> p1, double t, double dt) {
    if (!(t >= 0.0 && t < 1.0)) throw InvalidArgument("rate step: t must lie in [0,1)");
    if (!(dt > 0.0)) throw InvalidArgument("rate step: dt must be positive");
    check_distribution(p1, "rate step");
    const double inv = 1.0 / (1.0 - t);
    double max_rate = 0.0;
    for (std::size_t j = 0; j < p1.size(); ++j)
        if (static_cast<int>(j) != x) max_rate = std::max(max_rate, p1[j] * inv);
    if (dt * max_rate > 1.0 + 1e-12)
        throw InvalidArgument("rate step: dt * rate = " + std::to_string(dt * max_rate) + " exceeds 1; use a smaller step (dt <= 1 - t)");
    std::vector<double> out(p1.size(), 0.0);
    double jump = 0.0;
    for (std::size_t j = 0; j < p1.size(); ++j) {
        if (static_cast<int>(j) == x) continue;
        out[j] = std::clamp(dt * p1[j] * inv, 0.0, 1.0);
        jump += out[j];
    }
    if (jump > 1.0) {
        for (double& v : out) v /= jump;
        jump = 1.0;
    }
    out[static_cast<std::size_t>(x)] = 1.0 - jump;
    return out;
}

Graph rate_step(const Graph& g_t, std::span<const double> node_probs, std::span<const double> edge_probs, double t, double dt,
                Rng& rng) {
    check_probs_shape(g_t, node_probs, edge_probs, "rate step");
    return step_graph(g_t, node_probs, edge_probs, rng,
                      [&](bool, int x, std::span<const double> p) { return rate_distribution(x, p, t, dt); });
}

}  // namespace gengnn
