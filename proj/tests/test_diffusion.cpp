#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gengnn/denoiser.hpp"
#include "gengnn/diffusion.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/generators.hpp"
#include "gengnn/gradcheck.hpp"
#include "gengnn/random.hpp"
#include "gengnn/sampler.hpp"
#include "gengnn/trainer.hpp"
#include "oracles.hpp"

using namespace gengnn;
using gengnn::oracle::rate_oracle;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat transition_oracle(const std::vector<double>& m, double a) {
    const std::size_t d = m.size();
    Mat M(d, std::vector<double>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) M[i][j] = (i == j ? a : 0.0) + (1.0 - a) * m[j];
    return M;
}

Mat matmul(const Mat& A, const Mat& B) {
    Mat C(A.size(), std::vector<double>(B[0].size(), 0.0));
    for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t k = 0; k < B.size(); ++k)
            for (std::size_t j = 0; j < B[0].size(); ++j) C[i][j] += A[i][k] * B[k][j];
    return C;
}

Mat identity(std::size_t d) {
    Mat I(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) I[i][i] = 1.0;
    return I;
}

// Bayes rule with explicitly composed cumulative matrices.
std::vector<double> posterior_oracle(const std::vector<double>& m, const NoiseSchedule& s, int t, int xt, const std::vector<double>& p0) {
    const std::size_t d = m.size();
    Mat Qprev = identity(d);
    for (int k = 1; k < t; ++k) Qprev = matmul(Qprev, transition_oracle(m, s.alpha(k)));
    const Mat Qt = transition_oracle(m, s.alpha(t));
    const Mat Qbar = matmul(Qprev, Qt);
    std::vector<double> out(d, 0.0);
    double used = 0.0;
    for (std::size_t x0 = 0; x0 < d; ++x0) {
        if (p0[x0] <= 0.0 || Qbar[x0][static_cast<std::size_t>(xt)] <= 0.0) continue;
        for (std::size_t k = 0; k < d; ++k)
            out[k] += p0[x0] * Qt[k][static_cast<std::size_t>(xt)] * Qprev[x0][k] / Qbar[x0][static_cast<std::size_t>(xt)];
        used += p0[x0];
    }
    for (double& v : out) v /= used;
    return out;
}

std::vector<double> random_distribution(std::size_t d, Rng& rng) {
    std::vector<double> p(d);
    for (double& v : p) v = rng.uniform() + 0.05;
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
    return p;
}

Graph random_typed_graph(int n, int dx, int de, Rng& rng) {
    Graph g(n, dx, de);
    for (int i = 0; i < n; ++i) g.set_node_type(i, static_cast<int>(rng.below(static_cast<std::uint64_t>(dx))));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const int e = static_cast<int>(rng.below(static_cast<std::uint64_t>(de)));
            if (e) g.set_edge(i, j, e);
        }
    return g;
}

Marginals marginals(std::vector<double> node, std::vector<double> edge) { return Marginals{std::move(node), std::move(edge)}; }

std::vector<double> onehot_nodes(const Graph& g) { return g.node_onehot(); }

std::vector<double> onehot_edges(const Graph& g) { return g.edge_onehot(); }

DenoiserConfig tiny_config() {
    DenoiserConfig c;
    c.layers = 2;
    c.hidden_x = 8;
    c.hidden_e = 4;
    c.hidden_y = 8;
    c.readout_x = 8;
    c.readout_e = 4;
    c.ffn = 8;
    c.rrwp_k = 4;
    c.time_dim = 4;
    c.dropout = 0.0;
    return c;
}

GraphSet small_trees(int count, int n, std::uint64_t seed) {
    GraphSet s;
    for (int i = 0; i < count; ++i) s.graphs.push_back(gen_tree(n, seed + static_cast<std::uint64_t>(i)));
    return s;
}

}  // namespace

TEST_CASE("cosine schedule starts clean and ends at the limit") {
    const NoiseSchedule s(100);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(100) < 1e-6);
    for (int t = 1; t <= 100; ++t) {
        CHECK(s.alpha_bar(t) <= s.alpha_bar(t - 1));
        CHECK(s.alpha(t) >= 0.0);
        CHECK(s.alpha(t) <= 1.0);
    }
    CHECK_THROWS_AS(s.alpha(0), InvalidArgument);
    CHECK_THROWS_AS(s.alpha_bar(101), InvalidArgument);
    CHECK_THROWS_AS(NoiseSchedule(0), InvalidArgument);
}

TEST_CASE("level_for_alpha_bar inverts the schedule on the grid") {
    const NoiseSchedule s(50);
    for (int t = 0; t <= 50; t += 5) CHECK(s.level_for_alpha_bar(s.alpha_bar(t)) == doctest::Approx(t / 50.0).epsilon(1e-6));
    CHECK(s.level_for_alpha_bar(0.0) == doctest::Approx(1.0));
    CHECK(s.level_for_alpha_bar(1.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("per-step transition matrices are row-stochastic and compose to the cumulative matrix") {
    const std::vector<double> m{0.2, 0.5, 0.3};
    const CategoricalTransition tr(m);
    const NoiseSchedule s(40);
    Mat prod = identity(3);
    for (int t = 1; t <= 40; ++t) {
        const auto M = tr.matrix(s.alpha(t));
        for (int i = 0; i < 3; ++i) {
            double row = 0.0;
            for (int j = 0; j < 3; ++j) {
                CHECK(M[static_cast<std::size_t>(i * 3 + j)] >= 0.0);
                row += M[static_cast<std::size_t>(i * 3 + j)];
            }
            CHECK(std::abs(row - 1.0) < 1e-12);
        }
        prod = matmul(prod, transition_oracle(m, s.alpha(t)));
        const auto cum = tr.matrix(s.alpha_bar(t));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(std::abs(prod[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - cum[static_cast<std::size_t>(i * 3 + j)]) < 1e-10);
    }
}

TEST_CASE("transition limits must be distributions") {
    CHECK_THROWS_AS(CategoricalTransition({0.5, 0.6}), ContractError);
    CHECK_THROWS_AS(CategoricalTransition({-0.1, 1.1}), ContractError);
    CHECK_THROWS_AS(CategoricalTransition({}), ContractError);
}

TEST_CASE("transition kinds parse and pick their limits") {
    CHECK(parse_transition_kind("absorbfirst") == TransitionKind::absorb_first);
    CHECK(to_string(TransitionKind::absorbing) == "absorbing");
    CHECK_THROWS_AS(parse_transition_kind("uniform"), ConfigError);
    const Marginals m = marginals({0.25, 0.75}, {0.9, 0.1});
    const auto marg = TransitionFamily::make(TransitionKind::marginal, 10, m);
    CHECK(marg.node.limit() == m.node);
    CHECK(marg.edge.limit() == m.edge);
    const auto abs = TransitionFamily::make(TransitionKind::absorbing, 10, m);
    CHECK(abs.node.limit() == std::vector<double>{1.0, 0.0});
    CHECK(abs.edge.limit() == std::vector<double>{1.0, 0.0});
    const auto first = TransitionFamily::make(TransitionKind::absorb_first, 10, m);
    CHECK(first.node.limit() == m.node);
    CHECK(first.edge.limit() == std::vector<double>{1.0, 0.0});
}

TEST_CASE("dataset marginals of trees") {
    const GraphSet trees = small_trees(10, 16, 3);
    const Marginals m = dataset_marginals(trees);
    CHECK(m.node == std::vector<double>{1.0});
    CHECK(m.edge[1] == doctest::Approx(15.0 / 120.0).epsilon(1e-14));
    CHECK(m.edge[0] == doctest::Approx(105.0 / 120.0).epsilon(1e-14));
    CHECK_THROWS_AS(dataset_marginals(GraphSet{}), ContractError);
}

TEST_CASE("forward noise at t=0 is the identity") {
    Rng rng(4);
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 50, marginals({0.2, 0.5, 0.3}, {0.6, 0.3, 0.1}));
    for (int k = 0; k < 20; ++k) {
        Graph g = random_typed_graph(9, 3, 3, rng);
        g.set_y({1.5});
        CHECK(forward_noise(g, 0, fam, rng) == g);
    }
}

TEST_CASE("forward noise at t=T reaches the marginal frequencies") {
    const std::vector<double> mx{0.2, 0.5, 0.3};
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 100, marginals(mx, {0.7, 0.2, 0.1}));
    Rng rng(11);
    const Graph g0(100, 3, 3);
    std::vector<double> count(3, 0.0);
    double total = 0.0;
    for (int draw = 0; draw < 1000; ++draw) {
        const Graph noisy = forward_noise(g0, 100, fam, rng);
        for (int i = 0; i < noisy.n(); ++i) count[static_cast<std::size_t>(noisy.node_type(i))] += 1.0;
        total += noisy.n();
        if (draw == 0) {
            CHECK(noisy.edge_count() > 0);
            noisy.check_invariants();
        }
    }
    CHECK(total == 1e5);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(count[k] / total - mx[k]) < 0.02);
}

TEST_CASE("absorbing noise at t=T empties the graph") {
    const auto fam = TransitionFamily::make(TransitionKind::absorbing, 30, marginals({0.5, 0.5}, {0.5, 0.5}));
    Rng rng(5);
    const Graph g = random_typed_graph(12, 2, 2, rng);
    const Graph noisy = forward_noise(g, 30, fam, rng);
    CHECK(noisy == Graph(12, 2, 2));
}

TEST_CASE("training loss at uniform logits is log d per element") {
    const Graph g = gen_tree(5, 1);
    const Tensor nl = Tensor::zeros({1, 5, 1});
    const Tensor el = Tensor::zeros({1, 5, 5, 2});
    const LossTerms l = training_loss(nl, el, {&g}, 5.0);
    CHECK(l.node_ce == doctest::Approx(0.0));
    CHECK(l.edge_ce == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(l.total.item() == doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("training loss matches a direct cross-entropy oracle and its gradient") {
    Rng rng(9);
    const int B = 2, n = 4, dx = 3, de = 3;
    std::vector<Graph> graphs;
    for (int b = 0; b < B; ++b) graphs.push_back(random_typed_graph(n, dx, de, rng));
    std::vector<double> xv(B * n * dx), ev(B * n * n * de);
    for (double& v : xv) v = rng.normal();
    for (double& v : ev) v = rng.normal();
    Tensor nl({B, n, dx}, xv, true), el({B, n, n, de}, ev, true);
    const std::vector<const Graph*> clean{&graphs[0], &graphs[1]};
    const LossTerms l = training_loss(nl, el, clean, 2.5);

    auto ce = [](const double* logits, int d, int target) {
        double m = logits[0];
        for (int k = 1; k < d; ++k) m = std::max(m, logits[k]);
        double z = 0.0;
        for (int k = 0; k < d; ++k) z += std::exp(logits[k] - m);
        return -(logits[target] - m - std::log(z));
    };
    double node = 0.0, edge = 0.0;
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < n; ++i) {
            node += ce(&xv[static_cast<std::size_t>((b * n + i) * dx)], dx, graphs[static_cast<std::size_t>(b)].node_type(i));
            for (int j = i + 1; j < n; ++j)
                edge += ce(&ev[static_cast<std::size_t>(((b * n + i) * n + j) * de)], de, graphs[static_cast<std::size_t>(b)].edge_type(i, j));
        }
    node /= B * n;
    edge /= B * n * (n - 1) / 2.0;
    CHECK(l.node_ce == doctest::Approx(node).epsilon(1e-12));
    CHECK(l.edge_ce == doctest::Approx(edge).epsilon(1e-12));
    CHECK(l.total.item() == doctest::Approx(node + 2.5 * edge).epsilon(1e-12));

    const GradCheckReport r = grad_check([&] { return training_loss(nl, el, clean, 2.5).total; }, {nl, el}, 1e-6);
    CHECK_MESSAGE(r.passed, r.note);
}

TEST_CASE("training loss rejects non-finite logits and shape mismatches") {
    const Graph g = gen_tree(3, 1);
    Tensor nl = Tensor::zeros({1, 3, 1});
    std::vector<double> ev(18, 0.0);
    ev[4] = std::nan("");
    CHECK_THROWS_AS(training_loss(nl, Tensor({1, 3, 3, 2}, ev), {&g}, 1.0), NumericError);
    CHECK_THROWS_AS(training_loss(nl, Tensor::zeros({1, 3, 3, 3}), {&g}, 1.0), ShapeError);
    CHECK_THROWS_AS(training_loss(nl, Tensor::zeros({1, 3, 3, 2}), {}, 1.0), ContractError);
}

TEST_CASE("posterior distribution matches Bayes rule on composed matrices") {
    Rng rng(21);
    const NoiseSchedule s(12);
    for (std::size_t d = 2; d <= 4; ++d) {
        const auto m = random_distribution(d, rng);
        const CategoricalTransition tr(m);
        for (int t : {1, 2, 6, 12})
            for (int xt = 0; xt < static_cast<int>(d); ++xt) {
                const auto p0 = random_distribution(d, rng);
                const auto got = posterior_distribution(tr, s, t, xt, p0);
                const auto want = posterior_oracle(m, s, t, xt, p0);
                for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-12);
                for (std::size_t x0 = 0; x0 < d; ++x0) {
                    std::vector<double> one(d, 0.0);
                    one[x0] = 1.0;
                    const auto g1 = posterior_distribution(tr, s, t, xt, one);
                    const auto w1 = posterior_oracle(m, s, t, xt, one);
                    for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(g1[k] - w1[k]) < 1e-12);
                }
            }
    }
}

TEST_CASE("posterior skips clean states that cannot reach x_t") {
    const CategoricalTransition tr({1.0, 0.0});
    const NoiseSchedule s(5);
    // Absorbing: a clean 0 never becomes 1, so x_t = 1 implies x0 = 1.
    const auto p = posterior_distribution(tr, s, 3, 1, std::vector<double>{0.7, 0.3});
    CHECK(p[1] == doctest::Approx(s.alpha_bar(2) * s.alpha(3) / s.alpha_bar(3)));
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
    const auto keep = posterior_distribution(tr, s, 3, 1, std::vector<double>{1.0, 0.0});
    CHECK(keep == std::vector<double>{0.0, 1.0});
    CHECK_THROWS_AS(posterior_distribution(tr, s, 3, 1, std::vector<double>{0.5, 0.6}), ContractError);
}

TEST_CASE("one-step posterior with oracle predictions reconstructs the clean graph") {
    Rng rng(31);
    for (TransitionKind kind : {TransitionKind::marginal, TransitionKind::absorbing, TransitionKind::absorb_first}) {
        const auto fam = TransitionFamily::make(kind, 1, marginals({0.3, 0.3, 0.4}, {0.5, 0.25, 0.25}));
        for (int k = 0; k < 10; ++k) {
            const Graph g0 = random_typed_graph(8, 3, 3, rng);
            const Graph g1 = forward_noise(g0, 1, fam, rng);
            const Graph back = posterior_step(g1, onehot_nodes(g0), onehot_edges(g0), 1, fam, rng);
            CHECK(back == g0);
        }
    }
}

TEST_CASE("rate distribution matches enumeration over clean endpoints") {
    Rng rng(41);
    for (std::size_t d = 1; d <= 4; ++d)
        for (int rep = 0; rep < 25; ++rep) {
            const auto p1 = random_distribution(d, rng);
            const double t = rng.uniform(0.0, 0.9);
            const double dt = rng.uniform(0.0, 1.0 - t) + 1e-6;
            const double dt_ok = std::min(dt, 1.0 - t);
            for (int x = 0; x < static_cast<int>(d); ++x) {
                const auto got = rate_distribution(x, p1, t, dt_ok);
                const auto want = rate_oracle(x, p1, t, dt_ok);
                for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-12);
            }
        }
}

TEST_CASE("rate step edge cases") {
    const std::vector<double> stay{0.0, 1.0, 0.0};
    CHECK(rate_distribution(1, stay, 0.3, 0.1) == std::vector<double>{0.0, 1.0, 0.0});
    const auto jump = rate_distribution(0, std::vector<double>{0.0, 0.0, 1.0}, 0.75, 0.25);
    CHECK(jump[2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(jump[0] == doctest::Approx(0.0));
    const auto two = rate_distribution(0, std::vector<double>{0.3, 0.7}, 0.5, 0.25);
    CHECK(two[1] == doctest::Approx(0.35).epsilon(1e-14));
    CHECK(two[0] == doctest::Approx(0.65).epsilon(1e-14));
    CHECK_THROWS_AS(rate_distribution(0, std::vector<double>{0.0, 1.0}, 0.5, 0.6), InvalidArgument);
    CHECK_THROWS_AS(rate_distribution(0, std::vector<double>{0.0, 1.0}, 1.0, 0.1), InvalidArgument);
    CHECK_THROWS_AS(rate_distribution(0, std::vector<double>{0.0, 1.0}, 0.2, 0.0), InvalidArgument);
}

TEST_CASE("last rate step lands on the predicted graph") {
    Rng rng(51);
    const Graph target = random_typed_graph(7, 2, 3, rng);
    const Graph start = random_typed_graph(7, 2, 3, rng);
    const Graph out = rate_step(start, onehot_nodes(target), onehot_edges(target), 0.9, 0.1, rng);
    CHECK(out == target);
}

TEST_CASE("rate step frequencies follow the single-element distribution") {
    Rng rng(61);
    const Graph g(2, 3, 2);
    const std::vector<double> pn{0.2, 0.5, 0.3, 0.2, 0.5, 0.3};
    std::vector<double> pe(2 * 2 * 2, 0.5);
    const auto want = rate_distribution(0, std::vector<double>{0.2, 0.5, 0.3}, 0.2, 0.4);
    std::vector<double> count(3, 0.0);
    const int draws = 20000;
    for (int k = 0; k < draws; ++k) count[static_cast<std::size_t>(rate_step(g, pn, pe, 0.2, 0.4, rng).node_type(0))] += 1.0;
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(count[k] / draws - want[k]) < 0.015);
}

TEST_CASE("node count sampler follows the histogram and round-trips") {
    const NodeCountSampler s(std::map<int, std::size_t>{{5, 1}, {9, 3}});
    const auto draws = s.draw_many(4000, 3);
    const double nines = static_cast<double>(std::count(draws.begin(), draws.end(), 9));
    CHECK(std::abs(nines / 4000.0 - 0.75) < 0.03);
    CHECK(s.draw_many(50, 3) == s.draw_many(50, 3));
    CHECK(NodeCountSampler::from_json(s.to_json()).histogram() == s.histogram());
    CHECK_THROWS_AS(NodeCountSampler(GraphSet{}), ContractError);
}

TEST_CASE("sampling is deterministic per seed and records snapshots") {
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 6, dataset_marginals(small_trees(8, 6, 1)));
    const Denoiser model(tiny_config(), 2);
    SampleOptions opt;
    opt.seed = 17;
    opt.batch = 3;
    opt.snapshot_chains = 2;
    const std::vector<int> counts{6, 4, 6, 5, 6};
    const SampleResult a = sample_graphs(model, fam, counts, opt);
    const SampleResult b = sample_graphs(model, fam, counts, opt);
    REQUIRE(a.graphs.size() == counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        CHECK(a.graphs[c] == b.graphs[c]);
        CHECK(a.graphs[c].n() == counts[c]);
    }
    REQUIRE(a.snapshots.size() == 12);
    CHECK(a.snapshots[0].chain == 0);
    CHECK(a.snapshots[0].step == 6);
    CHECK(a.snapshots[5].step == 1);
    CHECK(a.snapshots[6].chain == 1);
    CHECK(a.snapshots[6].n == 4);
    CHECK(a.snapshots[0].layer_erank.size() == 2);
    CHECK(a.snapshots[0].width == 1 + 4);

    opt.seed = 18;
    const SampleResult c = sample_graphs(model, fam, counts, opt);
    bool differ = false;
    for (std::size_t k = 0; k < counts.size(); ++k) differ = differ || !(c.graphs[k] == a.graphs[k]);
    CHECK(differ);

    // Batch size only groups work; every chain keeps its own stream.
    opt.seed = 17;
    opt.batch = 1;
    const SampleResult d = sample_graphs(model, fam, counts, opt);
    for (std::size_t k = 0; k < counts.size(); ++k) CHECK(d.graphs[k] == a.graphs[k]);
}

TEST_CASE("snapshots round-trip through JSONL") {
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 3, dataset_marginals(small_trees(4, 5, 1)));
    const Denoiser model(tiny_config(), 2);
    SampleOptions opt;
    opt.snapshot_chains = 1;
    const SampleResult r = sample_graphs(model, fam, {5}, opt);
    const auto path = std::filesystem::temp_directory_path() / "gengnn_snapshots_test.jsonl";
    write_snapshots(path, r.snapshots);
    const auto back = read_snapshots(path);
    REQUIRE(back.size() == r.snapshots.size());
    CHECK(back[1].x_out == r.snapshots[1].x_out);
    CHECK(back[2].g == r.snapshots[2].g);
    std::filesystem::remove(path);
}

TEST_CASE("sampler rejects bad options") {
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 4, dataset_marginals(small_trees(4, 5, 1)));
    const Denoiser model(tiny_config(), 2);
    SampleOptions opt;
    opt.steps = 3;
    CHECK_THROWS_AS(sample_graphs(model, fam, {5}, opt), InvalidArgument);
    opt.steps = 0;
    CHECK_THROWS_AS(sample_graphs(model, fam, {0}, opt), InvalidArgument);
    const auto fam3 = TransitionFamily::make(TransitionKind::marginal, 4, marginals({1.0}, {0.5, 0.25, 0.25}));
    CHECK_THROWS_AS(sample_graphs(model, fam3, {5}, SampleOptions{}), CompatibilityError);
    CHECK(parse_sampler_mode("rate") == SamplerMode::rate);
    CHECK_THROWS_AS(parse_sampler_mode("ddim"), ConfigError);
}

TEST_CASE("rate sampler runs with its own step count") {
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 50, dataset_marginals(small_trees(4, 5, 1)));
    const Denoiser model(tiny_config(), 2);
    SampleOptions opt;
    opt.mode = SamplerMode::rate;
    opt.steps = 7;
    opt.snapshot_chains = 1;
    const SampleResult r = sample_graphs(model, fam, {5, 5}, opt);
    CHECK(r.graphs.size() == 2);
    CHECK(r.snapshots.size() == 7);
    CHECK(r.snapshots.front().noise == doctest::Approx(1.0));
    CHECK(r.snapshots.back().step == 6);
}

TEST_CASE("a model predicting the marginals samples marginal edge densities") {
    // Zeroed output weights make the denoiser predict uniform classes; with a
    // uniform limit the reverse chain then keeps the uniform edge frequency.
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 5, marginals({1.0}, {0.5, 0.5}));
    Denoiser model(tiny_config(), 3);
    for (auto& [name, t] : model.params().items())
        if (name.rfind("readout.", 0) == 0 && name.find('2') != std::string::npos)
            for (double& v : t.mutable_data()) v = 0.0;
    SampleOptions opt;
    opt.batch = 50;
    const SampleResult r = sample_graphs(model, fam, std::vector<int>(200, 6), opt);
    double edges = 0.0;
    for (const Graph& g : r.graphs) edges += g.edge_count();
    CHECK(std::abs(edges / (200.0 * 15.0) - 0.5) < 0.03);
}

TEST_CASE("trainer with zero epochs keeps the initial weights") {
    const GraphSet data = small_trees(6, 5, 1);
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 10, dataset_marginals(data));
    Denoiser model(tiny_config(), 4);
    const auto initial = model.params().to_json();
    TrainOptions opt;
    opt.epochs = 0;
    Trainer tr(model, fam, data, nullptr, opt);
    CHECK(tr.run().empty());
    CHECK(tr.best_params_json() == initial);
}

TEST_CASE("training is deterministic and resumes exactly") {
    const GraphSet data = small_trees(12, 6, 1);
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 20, dataset_marginals(data));
    auto cfg = tiny_config();
    cfg.dropout = 0.1;
    TrainOptions opt;
    opt.epochs = 3;
    opt.batch_size = 4;
    opt.seed = 5;
    opt.adam.lr = 1e-3;

    Denoiser a(cfg, 7), b(cfg, 7);
    Trainer ta(a, fam, data, nullptr, opt), tb(b, fam, data, nullptr, opt);
    const auto ra = ta.run();
    const auto rb = tb.run();
    REQUIRE(ra.size() == 3);
    CHECK(ra.back().steps == 9);
    CHECK(a.params().to_json() == b.params().to_json());

    Denoiser c(cfg, 7);
    TrainOptions first = opt;
    first.epochs = 1;
    Trainer tc(c, fam, data, nullptr, first);
    tc.run();
    const auto saved_params = c.params().to_json();
    const auto saved_state = tc.state();

    Denoiser d(cfg, 99);
    d.params().load_json(saved_params);
    Trainer td(d, fam, data, nullptr, opt);
    td.load_state(saved_state);
    const auto rest = td.run();
    CHECK(rest.size() == 2);
    CHECK(d.params().to_json() == a.params().to_json());
    CHECK(td.best_params_json() == ta.best_params_json());
}

TEST_CASE("trainer rejects incompatible data") {
    GraphSet data;
    data.graphs.push_back(Graph(4, 2, 2));
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 5, marginals({0.5, 0.5}, {0.5, 0.5}));
    Denoiser model(tiny_config(), 1);
    CHECK_THROWS_AS(Trainer(model, fam, data, nullptr, TrainOptions{}), CompatibilityError);
    CHECK_THROWS_AS(Trainer(model, fam, GraphSet{}, nullptr, TrainOptions{}), ContractError);
}

TEST_CASE("training on a single graph drives the loss down") {
    // An equivariant model cannot pin node identities at high noise, so the
    // floor is well above zero; the check is that optimization makes progress.
    GraphSet data;
    data.graphs.push_back(gen_tree(6, 2));
    const auto fam = TransitionFamily::make(TransitionKind::marginal, 20, dataset_marginals(data));
    auto cfg = tiny_config();
    cfg.hidden_x = cfg.hidden_y = cfg.ffn = 32;
    cfg.hidden_e = 16;
    Denoiser model(cfg, 1);
    TrainOptions opt;
    opt.epochs = 1500;
    opt.batch_size = 1;
    opt.adam.lr = 3e-3;
    Trainer tr(model, fam, data, nullptr, opt);
    const double before = tr.validation_loss();
    double last = 0.0;
    tr.run([&](const EpochRecord& r) { last = r.train_loss; });
    model.params().load_json(tr.best_params_json());
    MESSAGE("validation loss " << before << " -> " << tr.validation_loss());
    CHECK(tr.validation_loss() < 0.5 * before);
    CHECK(tr.best_score() <= last + 1e-12);
}
