#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gengnn/graph.hpp"
#include "gengnn/params.hpp"
#include "gengnn/tensor.hpp"

namespace gengnn {

class Rng;

enum class Backbone { mpnn, gcn, gine };

Backbone parse_backbone(const std::string& name);
std::string to_string(Backbone b);

struct DenoiserFlags {
    bool rrwp = true;
    bool edge_gate = true;
    bool node_gate = true;
    bool ffn = true;
    bool residual = true;
    bool norm = true;
};

struct DenoiserConfig {
    Backbone backbone = Backbone::mpnn;
    int layers = 12;
    int hidden_x = 64;
    int hidden_e = 16;
    int hidden_y = 64;
    int readout_x = 32;
    int readout_e = 16;
    int readout_y = 32;  // kept for parity with the hyperparameter table; no global targets are decoded
    int ffn = 32;
    int rrwp_k = 12;
    int time_dim = 16;
    double dropout = 0.1;
    DenoiserFlags flags{};

    int node_classes = 1;
    int edge_classes = 2;
    int y_dim = 0;

    int enc_width() const { return flags.rrwp ? rrwp_k : 0; }
    // Throws ConfigError listing every invalid field.
    void validate() const;
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

// Prepared (constant) network inputs for a batch of equally sized graphs.
struct DenoiserInput {
    int batch = 0;
    int n = 0;
    Tensor x_t;     // [B,n,dx] one-hot noisy node types
    Tensor e_t;     // [B,n,n,de] one-hot noisy edge types
    Tensor x_enc;   // [B,n,K] RRWP diagonal
    Tensor e_enc;   // [B,n,n,K] RRWP off-diagonal
    Tensor adj;     // [B,n,n,1] noisy discrete adjacency
    Tensor y;       // [B,dy + time_dim]
};

// Intermediate values of one layer, recorded when tracing is requested.
struct LayerTrace {
    Tensor x, e, y;        // layer inputs
    Tensor alpha;          // [B,n,n,1] edge gate (off-diagonal indicator when disabled)
    Tensor msg;            // [B,n,hx] aggregated messages before the node gate
    Tensor gated;          // [B,n,hx] after the node gate
    Tensor pool_x, pool_e; // global pools
    Tensor x_next, e_next, y_next;
};

struct DenoiserOutput {
    Tensor node_logits;  // [B,n,dx]
    Tensor edge_logits;  // [B,n,n,de], symmetric, diagonal forced to "no edge"
    // Node-side decomposition X_out = G + S_X X_in (S_X = identity when the
    // residual flag is on, zero otherwise).
    Tensor x_in;   // [B,n,dx+K]
    Tensor g;      // [B,n,dx+K]
    Tensor x_out;  // [B,n,dx+K]
    std::vector<LayerTrace> trace;  // one entry per layer, when traced
};

// Sinusoidal embedding of a noise level s in [0,1].
std::vector<double> time_embedding(double s, int width);

class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

    const DenoiserConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // noise[b] is the noise level in [0,1] of graph b (1 = fully noised).
    DenoiserInput prepare(const std::vector<const Graph*>& graphs, const std::vector<double>& noise) const;

    DenoiserOutput forward(const DenoiserInput& in, bool training = false, Rng* rng = nullptr, bool trace = false) const;
    DenoiserOutput forward(const Graph& g, double noise) const;

private:
    struct Lin {
        Tensor w, b;
    };
    struct Ffn {
        Lin l1, l2;
    };
    struct Norm {
        Tensor gamma, beta;
    };
    struct Layer {
        // edge gate f_edge: [x_i | x_j | e_ij | y] -> hidden_e -> 1
        Tensor ga_xi, ga_xj, ga_e, ga_y, ga_b;
        Lin ga_out;
        // node gate f_node: [x_i | mean_j e_ij | y] -> hidden_x -> 1
        Tensor gn_x, gn_e, gn_y, gn_b;
        Lin gn_out;
        // message / backbone weights
        Tensor msg_x, msg_e, msg_b;  // mpnn
        Lin phi;                     // gine edge map
        Tensor eps;                  // gine epsilon
        Tensor gcn_w;                // gcn
        // edge update [x_i | x_j | e_ij | y] -> hidden_e
        Tensor eu_x, eu_e, eu_y, eu_b;
        // global update [y | pool X | pool E] -> hidden_y
        Tensor yu_y, yu_x, yu_e, yu_b;
        Ffn ffn_x, ffn_e, ffn_y;
        Norm norm_x, norm_e, norm_y;
    };

    Lin make_lin(const std::string& name, int in, int out, Rng& rng);
    Ffn make_ffn(const std::string& name, int width, Rng& rng);
    Norm make_norm(const std::string& name, int width);

    Tensor apply_ffn(const Ffn& f, const Tensor& h, bool training, Rng* rng, bool edge) const;
    Tensor update(const Tensor& h, const Tensor& delta, const Ffn& f, const Norm& nrm, bool training, Rng* rng, bool edge,
                  const char* what) const;

    DenoiserConfig cfg_;
    ParamStore params_;
    Lin in_x_, in_e_, in_y_;
    std::vector<Layer> layers_;
    Lin out_x_;              // G_theta output projection to dx + K
    Lin ro_x1_, ro_x2_;      // node readout
    Lin ro_e1_, ro_e2_;      // edge readout
};

// Applies a dropout mask that is symmetric in axes 1 and 2 of a [B,n,n,f] tensor.
Tensor symmetric_dropout(const Tensor& e, double p, Rng& rng, bool training);

}  // namespace gengnn
