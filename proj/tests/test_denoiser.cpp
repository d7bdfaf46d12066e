#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <numeric>

#include "gengnn/denoiser.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/gradcheck.hpp"
#include "gengnn/graph.hpp"
#include "gengnn/random.hpp"

using namespace gengnn;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

DenoiserConfig small_config(Backbone b, int layers = 1) {
    DenoiserConfig c;
    c.backbone = b;
    c.layers = layers;
    c.hidden_x = 6;
    c.hidden_e = 4;
    c.hidden_y = 5;
    c.readout_x = 4;
    c.readout_e = 3;
    c.ffn = 7;
    c.rrwp_k = 3;
    c.time_dim = 4;
    c.dropout = 0.0;
    c.node_classes = 2;
    c.edge_classes = 2;
    return c;
}

Graph random_graph(int n, std::uint64_t seed, double p = 0.5) {
    Rng rng(seed);
    Graph g(n, 2, 2);
    for (int i = 0; i < n; ++i) g.set_node_type(i, static_cast<int>(rng.below(2)));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.bernoulli(p)) g.set_edge(i, j);
    return g;
}

void randomize(Denoiser& d, std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    for (auto& [name, t] : d.params().items())
        for (double& v : t.mutable_data()) v = rng.uniform(-scale, scale);
}

void fill(Denoiser& d, const std::string& name, double value) {
    for (double& v : d.params().get(name).mutable_data()) v = value;
}

MatrixXd mat(const Denoiser& d, const std::string& name) {
    const Tensor& t = d.params().get(name);
    MatrixXd m(t.dim(0), t.dim(1));
    for (int r = 0; r < t.dim(0); ++r)
        for (int c = 0; c < t.dim(1); ++c) m(r, c) = t.data()[static_cast<std::size_t>(r * t.dim(1) + c)];
    return m;
}

RowVectorXd vec(const Denoiser& d, const std::string& name) {
    const Tensor& t = d.params().get(name);
    RowVectorXd v(static_cast<Eigen::Index>(t.numel()));
    for (std::size_t k = 0; k < t.numel(); ++k) v(static_cast<Eigen::Index>(k)) = t.data()[k];
    return v;
}

// Rows of a [1, rows, width] (or [1, n, n, width]) tensor.
MatrixXd rows_of(const Tensor& t) {
    const int w = t.dim(-1);
    const int r = static_cast<int>(t.numel()) / w;
    MatrixXd m(r, w);
    for (int i = 0; i < r; ++i)
        for (int c = 0; c < w; ++c) m(i, c) = t.data()[static_cast<std::size_t>(i * w + c)];
    return m;
}

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x))); }
double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

RowVectorXd gelu_row(RowVectorXd v) {
    for (auto& x : v) x = gelu_ref(x);
    return v;
}

RowVectorXd layer_norm_row(const RowVectorXd& v, const RowVectorXd& gamma, const RowVectorXd& beta) {
    const double mu = v.mean();
    const double var = (v.array() - mu).square().mean();
    return ((v.array() - mu) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(gamma) + beta;
}

struct RefLayer {
    MatrixXd alpha, msg, gated, x_next, e_next;
    RowVectorXd pool_x, pool_e, y_next;
};

// Scalar-loop recomputation of one layer from its traced inputs.
RefLayer reference_layer(const Denoiser& d, int l, const MatrixXd& X, const MatrixXd& E, const RowVectorXd& Y, const MatrixXd& A) {
    const DenoiserConfig& c = d.config();
    const std::string p = "layer" + std::to_string(l);
    const int n = static_cast<int>(X.rows());
    auto e = [&](int i, int j) -> RowVectorXd { return E.row(i * n + j); };
    RefLayer r;

    r.alpha = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (!c.flags.edge_gate) {
                r.alpha(i, j) = 1.0;
                continue;
            }
            RowVectorXd pre = X.row(i) * mat(d, p + ".gate_e.xi") + X.row(j) * mat(d, p + ".gate_e.xj") + e(i, j) * mat(d, p + ".gate_e.e") +
                              Y * mat(d, p + ".gate_e.y") + vec(d, p + ".gate_e.b");
            const double s = (gelu_row(pre) * mat(d, p + ".gate_e.out.w"))(0) + vec(d, p + ".gate_e.out.b")(0);
            r.alpha(i, j) = sigmoid_ref(s);
        }

    r.msg = MatrixXd::Zero(n, c.hidden_x);
    for (int i = 0; i < n; ++i) {
        if (c.backbone == Backbone::gcn) {
            auto deg = [&](int k) { return 1.0 + A.row(k).sum(); };
            const MatrixXd xw = X * mat(d, p + ".gcn.w");
            for (int j = 0; j < n; ++j) {
                const double ahat = r.alpha(i, j) * A(i, j) + (i == j ? 1.0 : 0.0);
                r.msg.row(i) += ahat / std::sqrt(deg(i) * deg(j)) * xw.row(j);
            }
            continue;
        }
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            RowVectorXd m = c.backbone == Backbone::mpnn
                                ? RowVectorXd(X.row(j) * mat(d, p + ".msg.x") + e(i, j) * mat(d, p + ".msg.e") + vec(d, p + ".msg.b"))
                                : RowVectorXd(X.row(j) + e(i, j) * mat(d, p + ".phi.w") + vec(d, p + ".phi.b"));
            r.msg.row(i) += r.alpha(i, j) * m.cwiseMax(0.0);
        }
    }

    r.gated = r.msg;
    if (c.flags.node_gate)
        for (int i = 0; i < n; ++i) {
            RowVectorXd ebar = RowVectorXd::Zero(c.hidden_e);
            for (int j = 0; j < n; ++j)
                if (j != i) ebar += e(i, j) / (n - 1);
            RowVectorXd pre = X.row(i) * mat(d, p + ".gate_n.x") + ebar * mat(d, p + ".gate_n.e") + Y * mat(d, p + ".gate_n.y") +
                              vec(d, p + ".gate_n.b");
            const double s = (gelu_row(pre) * mat(d, p + ".gate_n.out.w"))(0) + vec(d, p + ".gate_n.out.b")(0);
            r.gated.row(i) *= sigmoid_ref(s);
        }
    MatrixXd dx = r.gated;
    if (c.backbone == Backbone::gine) dx += (1.0 + vec(d, p + ".eps")(0)) * X;

    MatrixXd de(n * n, c.hidden_e);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            de.row(i * n + j) = X.row(i) * mat(d, p + ".edge_up.x") + X.row(j) * mat(d, p + ".edge_up.x") + e(i, j) * mat(d, p + ".edge_up.e") +
                                Y * mat(d, p + ".edge_up.y") + vec(d, p + ".edge_up.b");

    r.pool_x = X.colwise().mean();
    r.pool_e = RowVectorXd::Zero(c.hidden_e);
    double cnt = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (A(i, j) != 0.0) {
                r.pool_e += e(i, j);
                cnt += 1.0;
            }
    if (cnt > 0) r.pool_e /= cnt;
    RowVectorXd dy = Y * mat(d, p + ".global.y") + vec(d, p + ".global.b") + r.pool_x * mat(d, p + ".global.x") + r.pool_e * mat(d, p + ".global.e");

    auto upd = [&](const RowVectorXd& h, RowVectorXd delta, const std::string& tag) {
        if (c.flags.ffn)
            delta = gelu_row(delta * mat(d, p + ".ffn_" + tag + ".1.w") + vec(d, p + ".ffn_" + tag + ".1.b")) * mat(d, p + ".ffn_" + tag + ".2.w") +
                    vec(d, p + ".ffn_" + tag + ".2.b");
        RowVectorXd out = c.flags.residual ? RowVectorXd(h + delta) : delta;
        if (c.flags.norm) out = layer_norm_row(out, vec(d, p + ".norm_" + tag + ".gamma"), vec(d, p + ".norm_" + tag + ".beta"));
        return out;
    };
    r.x_next = MatrixXd(n, c.hidden_x);
    for (int i = 0; i < n; ++i) r.x_next.row(i) = upd(X.row(i), dx.row(i), "x");
    r.e_next = MatrixXd(n * n, c.hidden_e);
    for (int k = 0; k < n * n; ++k) r.e_next.row(k) = upd(E.row(k), de.row(k), "e");
    r.y_next = upd(Y, dy, "y");
    return r;
}

MatrixXd adjacency_of(const Graph& g) {
    MatrixXd A = MatrixXd::Zero(g.n(), g.n());
    for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < g.n(); ++j) A(i, j) = g.has_edge(i, j) ? 1.0 : 0.0;
    return A;
}

void check_close(const MatrixXd& a, const MatrixXd& b, double tol) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    INFO("max deviation " << (a - b).cwiseAbs().maxCoeff());
    CHECK((a - b).cwiseAbs().maxCoeff() <= tol);
}

void check_against_reference(const Denoiser& d, const Graph& g, double noise) {
    const DenoiserOutput out = d.forward(d.prepare({&g}, {noise}), false, nullptr, true);
    REQUIRE(static_cast<int>(out.trace.size()) == d.config().layers);
    const MatrixXd A = adjacency_of(g);
    for (int l = 0; l < d.config().layers; ++l) {
        const LayerTrace& t = out.trace[static_cast<std::size_t>(l)];
        const RefLayer r = reference_layer(d, l, rows_of(t.x), rows_of(t.e), rows_of(t.y), A);
        const int n = g.n();
        MatrixXd alpha(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) alpha(i, j) = t.alpha.data()[static_cast<std::size_t>(i * n + j)];
        check_close(alpha, r.alpha, 1e-12);
        check_close(rows_of(t.msg), r.msg, 1e-10);
        check_close(rows_of(t.gated), r.gated, 1e-10);
        check_close(rows_of(t.pool_x), r.pool_x, 1e-12);
        check_close(rows_of(t.pool_e), r.pool_e, 1e-12);
        check_close(rows_of(t.x_next), r.x_next, 1e-9);
        check_close(rows_of(t.e_next), r.e_next, 1e-9);
        check_close(rows_of(t.y_next), r.y_next, 1e-9);
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t k = 0; k < a.numel(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

}  // namespace

TEST_CASE("every backbone matches a scalar recomputation of the layer stack") {
    for (Backbone b : {Backbone::mpnn, Backbone::gcn, Backbone::gine}) {
        CAPTURE(to_string(b));
        Denoiser d(small_config(b, 2), 11);
        randomize(d, 5);
        check_against_reference(d, random_graph(6, 3), 0.4);
    }
}

TEST_CASE("each ablation combination matches the recomputation") {
    for (int mask = 0; mask < 64; mask += 7) {
        DenoiserConfig c = small_config(mask % 2 ? Backbone::gine : Backbone::mpnn, 1);
        c.flags.rrwp = mask & 1;
        c.flags.edge_gate = mask & 2;
        c.flags.node_gate = mask & 4;
        c.flags.ffn = mask & 8;
        c.flags.residual = mask & 16;
        c.flags.norm = mask & 32;
        CAPTURE(mask);
        Denoiser d(c, 2);
        randomize(d, 9);
        check_against_reference(d, random_graph(5, 4), 0.7);
    }
}

TEST_CASE("disabled edge gate is the off-diagonal indicator") {
    DenoiserConfig c = small_config(Backbone::mpnn);
    c.flags.edge_gate = false;
    Denoiser d(c, 1);
    const Graph g = random_graph(4, 1);
    const auto out = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(out.trace[0].alpha.at({0, i, j, 0}) == (i == j ? 0.0 : 1.0));
}

TEST_CASE("zeroed gate networks output one half") {
    DenoiserConfig c = small_config(Backbone::mpnn);
    Denoiser d(c, 1);
    randomize(d, 2);
    fill(d, "layer0.gate_e.out.w", 0.0);
    fill(d, "layer0.gate_e.out.b", 0.0);
    fill(d, "layer0.gate_n.out.w", 0.0);
    fill(d, "layer0.gate_n.out.b", 0.0);
    const Graph g = random_graph(5, 2);
    const auto out = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true);
    const LayerTrace& t = out.trace[0];
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(t.alpha.at({0, i, j, 0}) == (i == j ? 0.0 : 0.5));
    for (std::size_t k = 0; k < t.msg.numel(); ++k) CHECK(t.gated.data()[k] == 0.5 * t.msg.data()[k]);
}

TEST_CASE("disabled node gate leaves messages unchanged") {
    DenoiserConfig c = small_config(Backbone::mpnn);
    c.flags.node_gate = false;
    Denoiser d(c, 4);
    const Graph g = random_graph(5, 6);
    const auto t = d.forward(d.prepare({&g}, {0.2}), false, nullptr, true).trace[0];
    CHECK(t.gated.same_node(t.msg));
}

TEST_CASE("a lone node receives no message") {
    Denoiser d(small_config(Backbone::mpnn), 3);
    randomize(d, 3);
    const Graph g(1, 2, 2);
    const auto t = d.forward(d.prepare({&g}, {0.3}), false, nullptr, true).trace[0];
    for (double v : t.msg.data()) CHECK(v == 0.0);
}

TEST_CASE("gine with zero epsilon and no messages passes x through") {
    DenoiserConfig c = small_config(Backbone::gine);
    c.flags.ffn = c.flags.residual = c.flags.norm = false;
    Denoiser d(c, 3);
    randomize(d, 4);
    fill(d, "layer0.eps", 0.0);
    const Graph g(1, 2, 2);
    const auto t = d.forward(d.prepare({&g}, {0.3}), false, nullptr, true).trace[0];
    CHECK(max_abs_diff(t.x_next, t.x) == 0.0);
}

TEST_CASE("K2 message with hand-set weights") {
    DenoiserConfig c = small_config(Backbone::mpnn);
    c.hidden_x = 2;
    c.hidden_e = 2;
    c.flags.edge_gate = c.flags.node_gate = false;
    Denoiser d(c, 8);
    randomize(d, 8);
    auto set = [&](const std::string& name, std::vector<double> v) {
        auto dst = d.params().get(name).mutable_data();
        REQUIRE(dst.size() == v.size());
        std::copy(v.begin(), v.end(), dst.begin());
    };
    set("layer0.msg.x", {1.0, 0.0, 0.0, 2.0});
    set("layer0.msg.e", {1.0, 1.0, 0.0, 0.0});
    set("layer0.msg.b", {0.0, -1.0});
    Graph g(2, 2, 2);
    g.set_edge(0, 1);
    const auto t = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true).trace[0];
    for (int i = 0; i < 2; ++i) {
        const int j = 1 - i;
        const double xj0 = t.x.at({0, j, 0}), xj1 = t.x.at({0, j, 1}), e0 = t.e.at({0, i, j, 0});
        CHECK(t.msg.at({0, i, 0}) == doctest::Approx(std::max(0.0, xj0 + e0)).epsilon(1e-14));
        CHECK(t.msg.at({0, i, 1}) == doctest::Approx(std::max(0.0, 2.0 * xj1 + e0 - 1.0)).epsilon(1e-14));
    }
}

TEST_CASE("update rule identities") {
    const Graph g = random_graph(5, 12);
    SUBCASE("all flags off passes the raw update through") {
        DenoiserConfig c = small_config(Backbone::mpnn);
        c.flags = DenoiserFlags{false, false, false, false, false, false};
        Denoiser d(c, 1);
        const auto t = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true).trace[0];
        CHECK(t.x_next.same_node(t.gated));
    }
    SUBCASE("zero FFN weights give a zero update") {
        DenoiserConfig c = small_config(Backbone::mpnn);
        c.flags = DenoiserFlags{true, true, true, true, false, false};
        Denoiser d(c, 1);
        for (const char* name : {"layer0.ffn_x.1.w", "layer0.ffn_x.1.b", "layer0.ffn_x.2.w", "layer0.ffn_x.2.b"}) fill(d, name, 0.0);
        const auto t = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true).trace[0];
        for (double v : t.x_next.data()) CHECK(v == 0.0);
    }
    SUBCASE("zero update with residual and norm is a layer norm of the input") {
        DenoiserConfig c = small_config(Backbone::mpnn);
        c.flags.ffn = false;
        Denoiser d(c, 1);
        randomize(d, 3);
        fill(d, "layer0.msg.x", 0.0);
        fill(d, "layer0.msg.e", 0.0);
        fill(d, "layer0.msg.b", 0.0);
        const auto t = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true).trace[0];
        const MatrixXd X = rows_of(t.x);
        const MatrixXd got = rows_of(t.x_next);
        for (int i = 0; i < 5; ++i)
            check_close(got.row(i), layer_norm_row(X.row(i), vec(d, "layer0.norm_x.gamma"), vec(d, "layer0.norm_x.beta")), 1e-12);
    }
}

TEST_CASE("global pooling") {
    Denoiser d(small_config(Backbone::mpnn), 2);
    randomize(d, 2);
    SUBCASE("equal node features pool to themselves") {
        fill(d, "in.x.w", 0.0);
        fill(d, "in.x.b", 0.25);
        const Graph g = random_graph(6, 1);
        const auto t = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true).trace[0];
        for (double v : t.pool_x.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
    SUBCASE("an edgeless graph pools edges to zero") {
        const Graph g(4, 2, 2);
        const auto t = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true).trace[0];
        for (double v : t.pool_e.data()) CHECK(v == 0.0);
    }
    SUBCASE("K2 pools by hand") {
        Graph g(2, 2, 2);
        g.set_edge(0, 1);
        const auto t = d.forward(d.prepare({&g}, {0.5}), false, nullptr, true).trace[0];
        for (int c = 0; c < 6; ++c) CHECK(t.pool_x.at({0, c}) == doctest::Approx(0.5 * (t.x.at({0, 0, c}) + t.x.at({0, 1, c}))));
        for (int c = 0; c < 4; ++c) CHECK(t.pool_e.at({0, c}) == doctest::Approx(0.5 * (t.e.at({0, 0, 1, c}) + t.e.at({0, 1, 0, c}))));
    }
}

TEST_CASE("forward is permutation equivariant") {
    for (Backbone b : {Backbone::mpnn, Backbone::gcn, Backbone::gine}) {
        CAPTURE(to_string(b));
        Denoiser d(small_config(b, 2), 21);
        randomize(d, 21);
        const Graph g = random_graph(7, 8);
        std::vector<int> perm(7);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(3);
        rng.shuffle(perm.begin(), perm.end());
        const auto a = d.forward(g, 0.6);
        const auto p = d.forward(g.permuted(perm), 0.6);
        double dev = 0.0;
        for (int i = 0; i < 7; ++i) {
            const int pi = perm[static_cast<std::size_t>(i)];
            for (int c = 0; c < 2; ++c) dev = std::max(dev, std::abs(a.node_logits.at({0, i, c}) - p.node_logits.at({0, pi, c})));
            for (int j = 0; j < 7; ++j) {
                const int pj = perm[static_cast<std::size_t>(j)];
                for (int c = 0; c < 2; ++c) dev = std::max(dev, std::abs(a.edge_logits.at({0, i, j, c}) - p.edge_logits.at({0, pi, pj, c})));
            }
        }
        CHECK(dev <= 1e-9);
    }
}

TEST_CASE("edge logits are exactly symmetric with a forced no-edge diagonal") {
    DenoiserConfig c = small_config(Backbone::mpnn, 2);
    c.dropout = 0.5;
    Denoiser d(c, 4);
    randomize(d, 4);
    const Graph g = random_graph(6, 4);
    Rng rng(1);
    for (bool training : {false, true}) {
        const auto out = d.forward(d.prepare({&g}, {0.5}), training, &rng, true);
        for (int i = 0; i < 6; ++i) {
            CHECK(out.edge_logits.at({0, i, i, 1}) - out.edge_logits.at({0, i, i, 0}) <= -1e3);
            for (int j = 0; j < 6; ++j) {
                for (int k = 0; k < 2; ++k) CHECK(out.edge_logits.at({0, i, j, k}) == out.edge_logits.at({0, j, i, k}));
                for (const auto& t : out.trace)
                    for (int k = 0; k < 4; ++k) CHECK(t.e_next.at({0, i, j, k}) == t.e_next.at({0, j, i, k}));
            }
        }
    }
}

TEST_CASE("output shapes and residual decomposition") {
    Denoiser d(small_config(Backbone::mpnn, 2), 5);
    const Graph g = random_graph(5, 5);
    const auto out = d.forward(g, 0.5);
    CHECK(out.node_logits.shape() == Shape{1, 5, 2});
    CHECK(out.edge_logits.shape() == Shape{1, 5, 5, 2});
    CHECK(out.x_in.shape() == Shape{1, 5, 5});
    CHECK(max_abs_diff(out.x_out, add(out.g, out.x_in)) == 0.0);

    DenoiserConfig c = small_config(Backbone::mpnn, 2);
    c.flags.residual = false;
    Denoiser off(c, 5);
    const auto o2 = off.forward(g, 0.5);
    CHECK(o2.x_out.same_node(o2.g));
}

TEST_CASE("config validation") {
    DenoiserConfig c = small_config(Backbone::mpnn);
    c.layers = 0;
    CHECK_THROWS_AS(Denoiser(c, 1), ConfigError);

    c.hidden_x = -1;
    c.dropout = 1.5;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("layers") != std::string::npos);
        CHECK(msg.find("hidden_x") != std::string::npos);
        CHECK(msg.find("dropout") != std::string::npos);
    }

    nlohmann::json j = to_json(small_config(Backbone::gine, 3));
    CHECK(to_json(denoiser_config_from_json(j)) == j);
    j["bogus"] = 1;
    j["flags"]["nope"] = true;
    j["backbone"] = "transformer";
    try {
        denoiser_config_from_json(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("model.bogus") != std::string::npos);
        CHECK(msg.find("model.flags.nope") != std::string::npos);
        CHECK(msg.find("transformer") != std::string::npos);
    }
}

TEST_CASE("graph width mismatch is a shape error") {
    Denoiser d(small_config(Backbone::mpnn), 1);
    const Graph wrong(4, 3, 2);
    CHECK_THROWS_AS(d.prepare({&wrong}, {0.5}), ShapeError);
    const Graph a = random_graph(4, 1), b = random_graph(5, 1);
    CHECK_THROWS_AS(d.prepare({&a, &b}, {0.5, 0.5}), ShapeError);
}

TEST_CASE("fixed seed forward is bit reproducible") {
    Graph g(2, 2, 2);
    g.set_edge(0, 1);
    const Denoiser a(small_config(Backbone::mpnn, 2), 77), b(small_config(Backbone::mpnn, 2), 77), c(small_config(Backbone::mpnn, 2), 78);
    const auto oa = a.forward(g, 0.3), ob = b.forward(g, 0.3), oc = c.forward(g, 0.3);
    CHECK(std::memcmp(oa.node_logits.data().data(), ob.node_logits.data().data(), oa.node_logits.numel() * sizeof(double)) == 0);
    CHECK(std::memcmp(oa.edge_logits.data().data(), ob.edge_logits.data().data(), oa.edge_logits.numel() * sizeof(double)) == 0);
    CHECK(max_abs_diff(oa.node_logits, oc.node_logits) > 0.0);
}

TEST_CASE("batched forward equals per-graph forward") {
    Denoiser d(small_config(Backbone::mpnn, 2), 6);
    randomize(d, 6);
    const Graph g1 = random_graph(5, 1), g2 = random_graph(5, 2);
    const auto batch = d.forward(d.prepare({&g1, &g2}, {0.2, 0.9}));
    const auto s2 = d.forward(g2, 0.9);
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 2; ++c) CHECK(batch.node_logits.at({1, i, c}) == doctest::Approx(s2.node_logits.at({0, i, c})).epsilon(1e-12));
}

TEST_CASE("time embedding") {
    const auto e0 = time_embedding(0.0, 6);
    CHECK(e0 == std::vector<double>{0, 0, 0, 1, 1, 1});
    CHECK(time_embedding(0.3, 6) != time_embedding(0.4, 6));
    CHECK(time_embedding(0.5, 5).back() == 0.5);
}

namespace {

GradCheckReport full_stack_grad_check(Backbone b) {
    DenoiserConfig c;
    c.backbone = b;
    c.layers = 2;
    c.hidden_x = c.hidden_e = c.hidden_y = c.ffn = c.readout_x = c.readout_e = 8;
    c.rrwp_k = 4;
    c.time_dim = 4;
    c.dropout = 0.0;
    c.node_classes = 2;
    c.edge_classes = 2;
    Denoiser d(c, 31);
    const Graph g = random_graph(5, 17);
    const DenoiserInput in = d.prepare({&g}, {0.5});
    Rng rng(4);
    std::vector<double> wn(10), we(50);
    for (double& v : wn) v = rng.uniform(-1, 1);
    for (double& v : we) v = rng.uniform(-1, 1);
    // The diagonal carries a large constant; weighting it would only add roundoff.
    for (int i = 0; i < 5; ++i) we[static_cast<std::size_t>((i * 5 + i) * 2)] = we[static_cast<std::size_t>((i * 5 + i) * 2 + 1)] = 0.0;
    const Tensor pn({1, 5, 2}, wn), pe({1, 5, 5, 2}, we);
    std::vector<Tensor> leaves;
    for (const auto& [name, t] : d.params().items()) leaves.push_back(t);
    auto f = [&]() {
        const auto out = d.forward(in);
        return add(sum_all(mul(out.node_logits, pn)), sum_all(mul(out.edge_logits, pe)));
    };
    return grad_check(f, leaves, 1e-4, 1e-4);
}

}  // namespace

TEST_CASE("full stack gradient check at width 8") {
    for (Backbone b : {Backbone::mpnn, Backbone::gcn, Backbone::gine}) {
        CAPTURE(to_string(b));
        const auto r = full_stack_grad_check(b);
        INFO("max rel error " << r.max_rel_error << " over " << r.checked << " entries");
        CHECK(r.passed);
    }
}
