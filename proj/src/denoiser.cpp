#include "gengnn/denoiser.hpp"

#include <cmath>
#include <iostream>
#include <set>

#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"
#include "gengnn/rrwp.hpp"

namespace gengnn {

using nlohmann::json;

Backbone parse_backbone(const std::string& name) {
    if (name == "mpnn") return Backbone::mpnn;
    if (name == "gcn") return Backbone::gcn;
    if (name == "gine") return Backbone::gine;
    throw ConfigError("unknown backbone '" + name + "' (expected mpnn, gcn or gine)");
}

std::string to_string(Backbone b) {
    switch (b) {
        case Backbone::mpnn: return "mpnn";
        case Backbone::gcn: return "gcn";
        case Backbone::gine: return "gine";
    }
    return "unknown";
}

void DenoiserConfig::validate() const {
    std::vector<std::string> bad;
    auto positive = [&](int v, const char* key) {
        if (v < 1) bad.push_back(std::string(key) + " must be >= 1 (got " + std::to_string(v) + ")");
    };
    positive(layers, "layers");
    positive(hidden_x, "hidden_x");
    positive(hidden_e, "hidden_e");
    positive(hidden_y, "hidden_y");
    positive(readout_x, "readout_x");
    positive(readout_e, "readout_e");
    positive(readout_y, "readout_y");
    positive(ffn, "ffn");
    positive(rrwp_k, "rrwp_k");
    positive(time_dim, "time_dim");
    positive(node_classes, "node_classes");
    if (edge_classes < 2) bad.push_back("edge_classes must be >= 2 (got " + std::to_string(edge_classes) + ")");
    if (y_dim < 0) bad.push_back("y_dim must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) bad.push_back("dropout must lie in [0,1)");
    if (!bad.empty()) {
        std::string msg = "invalid denoiser config: ";
        for (std::size_t k = 0; k < bad.size(); ++k) msg += (k ? "; " : "") + bad[k];
        throw ConfigError(msg);
    }
}

json to_json(const DenoiserConfig& c) {
    return json{{"backbone", to_string(c.backbone)},
                {"layers", c.layers},
                {"hidden_x", c.hidden_x},
                {"hidden_e", c.hidden_e},
                {"hidden_y", c.hidden_y},
                {"readout_x", c.readout_x},
                {"readout_e", c.readout_e},
                {"readout_y", c.readout_y},
                {"ffn", c.ffn},
                {"rrwp_k", c.rrwp_k},
                {"time_dim", c.time_dim},
                {"dropout", c.dropout},
                {"node_classes", c.node_classes},
                {"edge_classes", c.edge_classes},
                {"y_dim", c.y_dim},
                {"flags",
                 {{"rrwp", c.flags.rrwp},
                  {"edge_gate", c.flags.edge_gate},
                  {"node_gate", c.flags.node_gate},
                  {"ffn", c.flags.ffn},
                  {"residual", c.flags.residual},
                  {"norm", c.flags.norm}}}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
    DenoiserConfig c;
    std::vector<std::string> bad;
    if (!j.is_object()) throw ConfigError("denoiser config must be an object");
    static const std::set<std::string> known{"backbone", "layers",    "hidden_x", "hidden_e",     "hidden_y",     "readout_x",
                                             "readout_e", "readout_y", "ffn",      "rrwp_k",       "time_dim",     "dropout",
                                             "flags",     "node_classes", "edge_classes", "y_dim"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) bad.push_back("unknown key model." + key);
    auto read_int = [&](const char* key, int& dst) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number_integer())
            bad.push_back(std::string("model.") + key + " must be an integer");
        else
            dst = j.at(key).get<int>();
    };
    read_int("layers", c.layers);
    read_int("hidden_x", c.hidden_x);
    read_int("hidden_e", c.hidden_e);
    read_int("hidden_y", c.hidden_y);
    read_int("readout_x", c.readout_x);
    read_int("readout_e", c.readout_e);
    read_int("readout_y", c.readout_y);
    read_int("ffn", c.ffn);
    read_int("rrwp_k", c.rrwp_k);
    read_int("time_dim", c.time_dim);
    read_int("node_classes", c.node_classes);
    read_int("edge_classes", c.edge_classes);
    read_int("y_dim", c.y_dim);
    if (j.contains("dropout")) {
        if (!j.at("dropout").is_number())
            bad.push_back("model.dropout must be a number");
        else
            c.dropout = j.at("dropout").get<double>();
    }
    if (j.contains("backbone")) {
        try {
            c.backbone = parse_backbone(j.at("backbone").get<std::string>());
        } catch (const std::exception& e) {
            bad.push_back(std::string("model.backbone: ") + e.what());
        }
    }
    if (j.contains("flags")) {
        const json& f = j.at("flags");
        static const std::set<std::string> flags{"rrwp", "edge_gate", "node_gate", "ffn", "residual", "norm"};
        for (const auto& [key, value] : f.items()) {
            if (!flags.count(key)) {
                bad.push_back("unknown flag model.flags." + key);
                continue;
            }
            if (!value.is_boolean()) {
                bad.push_back("model.flags." + key + " must be a boolean");
                continue;
            }
            const bool v = value.get<bool>();
            if (key == "rrwp") c.flags.rrwp = v;
            if (key == "edge_gate") c.flags.edge_gate = v;
            if (key == "node_gate") c.flags.node_gate = v;
            if (key == "ffn") c.flags.ffn = v;
            if (key == "residual") c.flags.residual = v;
            if (key == "norm") c.flags.norm = v;
        }
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        bad.push_back(e.what());
    }
    if (!bad.empty()) {
        std::string msg = "invalid model config: ";
        for (std::size_t k = 0; k < bad.size(); ++k) msg += (k ? "; " : "") + bad[k];
        throw ConfigError(msg);
    }
    return c;
}

std::vector<double> time_embedding(double s, int width) {
    std::vector<double> out(static_cast<std::size_t>(width));
    const int half = width / 2;
    const double pos = 1000.0 * s;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / std::max(half, 1));
        out[static_cast<std::size_t>(k)] = std::sin(pos * freq);
        out[static_cast<std::size_t>(half + k)] = std::cos(pos * freq);
    }
    if (width % 2) out.back() = s;
    return out;
}

Tensor symmetric_dropout(const Tensor& e, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout: probability must lie in [0,1)");
    if (!training || p == 0.0) return e;
    if (e.rank() != 4 || e.dim(1) != e.dim(2)) throw ShapeError("symmetric_dropout expects [B,n,n,f], got " + shape_str(e.shape()));
    const auto B = static_cast<std::size_t>(e.dim(0)), n = static_cast<std::size_t>(e.dim(1)), f = static_cast<std::size_t>(e.dim(3));
    std::vector<double> mask(e.numel());
    const double keep = 1.0 / (1.0 - p);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j)
                for (std::size_t c = 0; c < f; ++c) {
                    const double m = rng.uniform() < p ? 0.0 : keep;
                    mask[((b * n + i) * n + j) * f + c] = m;
                    mask[((b * n + j) * n + i) * f + c] = m;
                }
    return mul(e, Tensor(e.shape(), std::move(mask)));
}

Denoiser::Lin Denoiser::make_lin(const std::string& name, int in, int out, Rng& rng) {
    Lin l;
    l.w = params_.add_uniform(name + ".w", in, out, rng);
    l.b = params_.add_constant(name + ".b", {out}, 0.0);
    return l;
}

Denoiser::Ffn Denoiser::make_ffn(const std::string& name, int width, Rng& rng) {
    return {make_lin(name + ".1", width, cfg_.ffn, rng), make_lin(name + ".2", cfg_.ffn, width, rng)};
}

Denoiser::Norm Denoiser::make_norm(const std::string& name, int width) {
    return {params_.add_constant(name + ".gamma", {width}, 1.0), params_.add_constant(name + ".beta", {width}, 0.0)};
}

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const int dx = cfg_.node_classes, de = cfg_.edge_classes, K = cfg_.enc_width();
    const int hx = cfg_.hidden_x, he = cfg_.hidden_e, hy = cfg_.hidden_y;
    in_x_ = make_lin("in.x", dx + K, hx, rng);
    in_e_ = make_lin("in.e", de + K, he, rng);
    in_y_ = make_lin("in.y", cfg_.y_dim + cfg_.time_dim, hy, rng);
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        Layer L;
        if (cfg_.flags.edge_gate) {
            L.ga_xi = params_.add_uniform(p + ".gate_e.xi", hx, he, rng);
            L.ga_xj = params_.add_uniform(p + ".gate_e.xj", hx, he, rng);
            L.ga_e = params_.add_uniform(p + ".gate_e.e", he, he, rng);
            L.ga_y = params_.add_uniform(p + ".gate_e.y", hy, he, rng);
            L.ga_b = params_.add_constant(p + ".gate_e.b", {he}, 0.0);
            L.ga_out = make_lin(p + ".gate_e.out", he, 1, rng);
        }
        if (cfg_.flags.node_gate) {
            L.gn_x = params_.add_uniform(p + ".gate_n.x", hx, hx, rng);
            L.gn_e = params_.add_uniform(p + ".gate_n.e", he, hx, rng);
            L.gn_y = params_.add_uniform(p + ".gate_n.y", hy, hx, rng);
            L.gn_b = params_.add_constant(p + ".gate_n.b", {hx}, 0.0);
            L.gn_out = make_lin(p + ".gate_n.out", hx, 1, rng);
        }
        switch (cfg_.backbone) {
            case Backbone::mpnn:
                L.msg_x = params_.add_uniform(p + ".msg.x", hx, hx, rng);
                L.msg_e = params_.add_uniform(p + ".msg.e", he, hx, rng);
                L.msg_b = params_.add_constant(p + ".msg.b", {hx}, 0.0);
                break;
            case Backbone::gine:
                L.phi = make_lin(p + ".phi", he, hx, rng);
                L.eps = params_.add_constant(p + ".eps", {1}, 0.0);
                break;
            case Backbone::gcn: L.gcn_w = params_.add_uniform(p + ".gcn.w", hx, hx, rng); break;
        }
        L.eu_x = params_.add_uniform(p + ".edge_up.x", hx, he, rng);
        L.eu_e = params_.add_uniform(p + ".edge_up.e", he, he, rng);
        L.eu_y = params_.add_uniform(p + ".edge_up.y", hy, he, rng);
        L.eu_b = params_.add_constant(p + ".edge_up.b", {he}, 0.0);
        L.yu_y = params_.add_uniform(p + ".global.y", hy, hy, rng);
        L.yu_x = params_.add_uniform(p + ".global.x", hx, hy, rng);
        L.yu_e = params_.add_uniform(p + ".global.e", he, hy, rng);
        L.yu_b = params_.add_constant(p + ".global.b", {hy}, 0.0);
        if (cfg_.flags.ffn) {
            L.ffn_x = make_ffn(p + ".ffn_x", hx, rng);
            L.ffn_e = make_ffn(p + ".ffn_e", he, rng);
            L.ffn_y = make_ffn(p + ".ffn_y", hy, rng);
        }
        if (cfg_.flags.norm) {
            L.norm_x = make_norm(p + ".norm_x", hx);
            L.norm_e = make_norm(p + ".norm_e", he);
            L.norm_y = make_norm(p + ".norm_y", hy);
        }
        layers_.push_back(std::move(L));
    }
    out_x_ = make_lin("out.x", hx, dx + K, rng);
    ro_x1_ = make_lin("readout.x1", dx + K, cfg_.readout_x, rng);
    ro_x2_ = make_lin("readout.x2", cfg_.readout_x, dx, rng);
    ro_e1_ = make_lin("readout.e1", he, cfg_.readout_e, rng);
    ro_e2_ = make_lin("readout.e2", cfg_.readout_e, de, rng);
}

DenoiserInput Denoiser::prepare(const std::vector<const Graph*>& graphs, const std::vector<double>& noise) const {
    if (graphs.empty()) throw ContractError("denoiser: empty batch");
    if (noise.size() != graphs.size()) throw ContractError("denoiser: one noise level per graph required");
    const int n = graphs[0]->n();
    const int B = static_cast<int>(graphs.size());
    const int dx = cfg_.node_classes, de = cfg_.edge_classes, K = cfg_.enc_width();
    const int dy = cfg_.y_dim, td = cfg_.time_dim;
    const auto un = static_cast<std::size_t>(n);
    std::vector<double> xt, et, xenc, eenc, adj, y;
    xt.reserve(static_cast<std::size_t>(B) * un * static_cast<std::size_t>(dx));
    et.reserve(static_cast<std::size_t>(B) * un * un * static_cast<std::size_t>(de));
    for (int b = 0; b < B; ++b) {
        const Graph& g = *graphs[static_cast<std::size_t>(b)];
        if (g.n() != n) throw ShapeError("denoiser: batch mixes graph sizes " + std::to_string(n) + " and " + std::to_string(g.n()));
        if (g.node_classes() != dx || g.edge_classes() != de)
            throw ShapeError("denoiser: graph has " + std::to_string(g.node_classes()) + " node / " + std::to_string(g.edge_classes()) +
                             " edge classes, model expects " + std::to_string(dx) + " / " + std::to_string(de));
        if (dy > 0 && static_cast<int>(g.y().size()) != dy)
            throw ShapeError("denoiser: graph y has width " + std::to_string(g.y().size()) + ", model expects " + std::to_string(dy));
        const auto x1 = g.node_onehot();
        xt.insert(xt.end(), x1.begin(), x1.end());
        const auto e1 = g.edge_onehot();
        et.insert(et.end(), e1.begin(), e1.end());
        const auto a = g.adjacency();
        adj.insert(adj.end(), a.begin(), a.end());
        if (K > 0) {
            const RRWPEncoding enc = rrwp(g, K);
            const auto np = enc.node_part();
            const auto ep = enc.edge_part();
            xenc.insert(xenc.end(), np.begin(), np.end());
            eenc.insert(eenc.end(), ep.begin(), ep.end());
        }
        if (dy > 0) y.insert(y.end(), g.y().begin(), g.y().end());
        const double s = noise[static_cast<std::size_t>(b)];
        const auto emb = time_embedding(s, td);
        y.insert(y.end(), emb.begin(), emb.end());
    }
    DenoiserInput in;
    in.batch = B;
    in.n = n;
    in.x_t = Tensor({B, n, dx}, std::move(xt));
    in.e_t = Tensor({B, n, n, de}, std::move(et));
    in.x_enc = Tensor({B, n, K}, std::move(xenc));
    in.e_enc = Tensor({B, n, n, K}, std::move(eenc));
    in.adj = Tensor({B, n, n, 1}, std::move(adj));
    in.y = Tensor({B, dy + td}, std::move(y));
    return in;
}

namespace {

Tensor symmetrize(const Tensor& e) { return scale(add(e, transpose(e, 1, 2)), 0.5); }

}  // namespace

Tensor Denoiser::apply_ffn(const Ffn& f, const Tensor& h, bool training, Rng* rng, bool edge) const {
    Tensor hid = gelu(linear(h, f.l1.w, f.l1.b));
    if (training && cfg_.dropout > 0) {
        if (!rng) throw ContractError("denoiser: training forward needs an Rng for dropout");
        hid = edge ? symmetric_dropout(hid, cfg_.dropout, *rng, true) : dropout(hid, cfg_.dropout, *rng, true);
    }
    return linear(hid, f.l2.w, f.l2.b);
}

Tensor Denoiser::update(const Tensor& h, const Tensor& delta, const Ffn& f, const Norm& nrm, bool training, Rng* rng, bool edge,
                        const char* what) const {
    Tensor d = cfg_.flags.ffn ? apply_ffn(f, delta, training, rng, edge) : delta;
    Tensor r = d;
    if (cfg_.flags.residual) {
        if (h.shape() == d.shape()) {
            r = add(h, d);
        } else {
            static bool logged = false;
            if (!logged) {
                std::cerr << "warning: residual skipped on " << what << " path (" << shape_str(h.shape()) << " vs " << shape_str(d.shape())
                          << ")\n";
                logged = true;
            }
        }
    }
    return cfg_.flags.norm ? layer_norm(r, nrm.gamma, nrm.beta) : r;
}

DenoiserOutput Denoiser::forward(const DenoiserInput& in, bool training, Rng* rng, bool trace) const {
    const int B = in.batch, n = in.n;
    const int de = cfg_.edge_classes, K = cfg_.enc_width();
    const int hx = cfg_.hidden_x, he = cfg_.hidden_e;
    const auto un = static_cast<std::size_t>(n);

    std::vector<double> off(un * un, 1.0);
    for (std::size_t i = 0; i < un; ++i) off[i * un + i] = 0.0;
    const Tensor offdiag({1, n, n, 1}, off);

    DenoiserOutput out;
    out.x_in = K > 0 ? concat({in.x_t, in.x_enc}, -1) : in.x_t;
    const Tensor e_in = K > 0 ? concat({in.e_t, in.e_enc}, -1) : in.e_t;

    Tensor X = linear(out.x_in, in_x_.w, in_x_.b);
    Tensor E = symmetrize(linear(e_in, in_e_.w, in_e_.b));
    Tensor Y = linear(in.y, in_y_.w, in_y_.b);

    // Constants derived from the noisy discrete adjacency.
    std::vector<double> inv_edges(static_cast<std::size_t>(B), 0.0);
    std::vector<double> gcn_norm;
    {
        const auto a = in.adj.data();
        for (int b = 0; b < B; ++b) {
            double cnt = 0.0;
            for (std::size_t k = 0; k < un * un; ++k) cnt += a[static_cast<std::size_t>(b) * un * un + k];
            inv_edges[static_cast<std::size_t>(b)] = cnt > 0 ? 1.0 / cnt : 0.0;
        }
        if (cfg_.backbone == Backbone::gcn) {
            // dinv_i * dinv_j with degrees counted including the self-loop
            gcn_norm.resize(static_cast<std::size_t>(B) * un * un);
            for (int b = 0; b < B; ++b) {
                std::vector<double> dinv(un);
                for (std::size_t i = 0; i < un; ++i) {
                    double deg = 1.0;
                    for (std::size_t j = 0; j < un; ++j) deg += a[(static_cast<std::size_t>(b) * un + i) * un + j];
                    dinv[i] = 1.0 / std::sqrt(deg);
                }
                for (std::size_t i = 0; i < un; ++i)
                    for (std::size_t j = 0; j < un; ++j) gcn_norm[(static_cast<std::size_t>(b) * un + i) * un + j] = dinv[i] * dinv[j];
            }
        }
    }
    const Tensor edge_scale({B, 1}, inv_edges);
    const double ebar_scale = n > 1 ? 1.0 / (n - 1) : 0.0;

    for (const Layer& L : layers_) {
        // Edge gate alpha_ij, shape [B,n,n,1], zero on the diagonal.
        Tensor alpha = offdiag;
        if (cfg_.flags.edge_gate) {
            Tensor pre = add(add(reshape(matmul_last(X, L.ga_xi), {B, n, 1, he}), reshape(matmul_last(X, L.ga_xj), {B, 1, n, he})),
                             add(matmul_last(E, L.ga_e), reshape(linear(Y, L.ga_y, L.ga_b), {B, 1, 1, he})));
            alpha = mul(sigmoid(linear(gelu(pre), L.ga_out.w, L.ga_out.b)), offdiag);
        }

        Tensor m;
        switch (cfg_.backbone) {
            case Backbone::mpnn: {
                Tensor msg = relu(add(add(reshape(matmul_last(X, L.msg_x), {B, 1, n, hx}), matmul_last(E, L.msg_e)), L.msg_b));
                m = sum(mul(alpha, msg), 2);
                break;
            }
            case Backbone::gine: {
                Tensor msg = relu(add(reshape(X, {B, 1, n, hx}), linear(E, L.phi.w, L.phi.b)));
                m = sum(mul(alpha, msg), 2);
                break;
            }
            case Backbone::gcn: {
                // D^-1/2 (alpha * A + I) D^-1/2 X W
                std::vector<double> eye(un * un, 0.0);
                for (std::size_t i = 0; i < un; ++i) eye[i * un + i] = 1.0;
                Tensor a_hat = add(mul(alpha, in.adj), Tensor({1, n, n, 1}, eye));
                Tensor norm = mul(a_hat, Tensor({B, n, n, 1}, gcn_norm));
                Tensor xw = reshape(matmul_last(X, L.gcn_w), {B, 1, n, hx});
                m = sum(mul(norm, xw), 2);
                break;
            }
        }

        Tensor gated = m;
        if (cfg_.flags.node_gate) {
            Tensor ebar = scale(sum(mul(E, offdiag), 2), ebar_scale);
            Tensor pre = add(add(matmul_last(X, L.gn_x), matmul_last(ebar, L.gn_e)), reshape(linear(Y, L.gn_y, L.gn_b), {B, 1, hx}));
            Tensor beta = sigmoid(linear(gelu(pre), L.gn_out.w, L.gn_out.b));
            gated = mul(beta, m);
        }

        Tensor dx_ = cfg_.backbone == Backbone::gine ? add(mul(add_scalar(L.eps, 1.0), X), gated) : gated;

        Tensor de_ = add(add(reshape(matmul_last(X, L.eu_x), {B, n, 1, he}), reshape(matmul_last(X, L.eu_x), {B, 1, n, he})),
                         add(matmul_last(E, L.eu_e), reshape(linear(Y, L.eu_y, L.eu_b), {B, 1, 1, he})));

        Tensor pool_x = mean(X, 1);
        Tensor pool_e = mul(sum(sum(mul(E, in.adj), 2), 1), edge_scale);
        Tensor dy_ = add(add(linear(Y, L.yu_y, L.yu_b), matmul_last(pool_x, L.yu_x)), matmul_last(pool_e, L.yu_e));

        Tensor X_next = update(X, dx_, L.ffn_x, L.norm_x, training, rng, false, "node");
        Tensor E_next = update(E, de_, L.ffn_e, L.norm_e, training, rng, true, "edge");
        Tensor Y_next = update(Y, dy_, L.ffn_y, L.norm_y, training, rng, false, "global");
        if (trace) out.trace.push_back({X, E, Y, alpha, m, gated, pool_x, pool_e, X_next, E_next, Y_next});
        X = X_next;
        E = E_next;
        Y = Y_next;
    }

    out.g = linear(X, out_x_.w, out_x_.b);
    out.x_out = cfg_.flags.residual ? add(out.g, out.x_in) : out.g;
    out.node_logits = linear(gelu(linear(out.x_out, ro_x1_.w, ro_x1_.b)), ro_x2_.w, ro_x2_.b);

    Tensor le = symmetrize(linear(gelu(linear(E, ro_e1_.w, ro_e1_.b)), ro_e2_.w, ro_e2_.b));
    std::vector<double> diag(un * un * static_cast<std::size_t>(de), 0.0);
    for (std::size_t i = 0; i < un; ++i)
        for (int c = 1; c < de; ++c) diag[(i * un + i) * static_cast<std::size_t>(de) + static_cast<std::size_t>(c)] = -1e4;
    out.edge_logits = add(mul(le, offdiag), Tensor({1, n, n, de}, diag));
    return out;
}

DenoiserOutput Denoiser::forward(const Graph& g, double noise) const { return forward(prepare({&g}, {noise})); }

}  // namespace gengnn
