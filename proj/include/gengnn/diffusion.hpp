#pragma once

#include <span>
#include <string>
#include <vector>

#include "gengnn/graph.hpp"
#include "gengnn/tensor.hpp"

namespace gengnn {

class Rng;

enum class TransitionKind {
    marginal,      // nodes and edges drift to the data marginals
    absorbing,     // nodes and edges drift to class 0
    absorb_first,  // edges absorbing, nodes marginal
};

TransitionKind parse_transition_kind(const std::string& name);
std::string to_string(TransitionKind k);

// Cosine schedule: alpha_bar(t) = f(t/T) / f(0), f(u) = cos^2(pi/2 (u + s)/(1 + s)).
// The per-step keep probability alpha(t) = alpha_bar(t) / alpha_bar(t-1), so the
// cumulative product of the per-step matrices reproduces alpha_bar exactly.
class NoiseSchedule {
public:
    explicit NoiseSchedule(int steps, double s = 0.008);

    int steps() const { return steps_; }
    double alpha(int t) const;      // 1 <= t <= T
    double alpha_bar(int t) const;  // 0 <= t <= T
    // Fractional noise level u in [0,1] with f(u)/f(0) = ab.
    double level_for_alpha_bar(double ab) const;

private:
    int steps_;
    double s_;
    std::vector<double> alpha_bar_;
};

// Transition family of one categorical variable: M = a I + (1 - a) 1 m^T.
class CategoricalTransition {
public:
    // Throws ContractError unless m is a probability vector within 1e-9.
    explicit CategoricalTransition(std::vector<double> limit);

    int classes() const { return static_cast<int>(limit_.size()); }
    const std::vector<double>& limit() const { return limit_; }
    std::vector<double> matrix(double a) const;               // d*d, row-major
    std::vector<double> row(int from, double a) const;        // distribution of the next state
    double entry(int from, int to, double a) const;

private:
    std::vector<double> limit_;
};

struct Marginals {
    std::vector<double> node;  // over node classes
    std::vector<double> edge;  // over edge classes, counted on pairs i<j
};

// Empirical class frequencies of a nonempty dataset.
Marginals dataset_marginals(const GraphSet& data);

struct TransitionFamily {
    TransitionKind kind;
    NoiseSchedule schedule;
    CategoricalTransition node;
    CategoricalTransition edge;

    static TransitionFamily make(TransitionKind kind, int steps, const Marginals& m);
};

// Samples X M_bar_t, E M_bar_t elementwise; edges drawn for i<j and mirrored.
Graph forward_noise(const Graph& g0, int t, const TransitionFamily& fam, Rng& rng);

// Graph drawn from the limiting distribution.
Graph sample_limit(int n, const TransitionFamily& fam, Rng& rng);

struct LossTerms {
    Tensor total;
    double node_ce = 0.0;  // mean over nodes
    double edge_ce = 0.0;  // mean over pairs i<j
};

// CE(nodes) + lambda_edge * CE(edges over i<j) against the clean graphs, averaged
// over the batch. Non-finite logits raise NumericError.
LossTerms training_loss(const Tensor& node_logits, const Tensor& edge_logits, const std::vector<const Graph*>& clean,
                        double lambda_edge);

// Reverse distribution of one element: sum_x0 q(x_{t-1} | x_t, x0) p0(x0).
// Clean states that cannot reach x_t are skipped; if none can, x_t is kept.
std::vector<double> posterior_distribution(const CategoricalTransition& tr, const NoiseSchedule& sched, int t, int x_t,
                                           std::span<const double> p0);

// One ancestral step t -> t-1. node_probs is n*dx, edge_probs n*n*de (rows for
// i<j are used). Rows must sum to 1 within 1e-6.
Graph posterior_step(const Graph& g_t, std::span<const double> node_probs, std::span<const double> edge_probs, int t,
                     const TransitionFamily& fam, Rng& rng);

// Euler step of the expected rate R_t(x, j) = p1(j) [j != x] / (1 - t) over dt.
// Throws InvalidArgument when dt * max rate exceeds 1.
std::vector<double> rate_distribution(int x, std::span<const double> p1, double t, double dt);

Graph rate_step(const Graph& g_t, std::span<const double> node_probs, std::span<const double> edge_probs, double t, double dt,
                Rng& rng);

}  // namespace gengnn
