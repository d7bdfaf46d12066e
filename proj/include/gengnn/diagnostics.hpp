#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gengnn/graph.hpp"
#include "gengnn/sampler.hpp"

namespace gengnn {

// ||(I - v v^T) X||_F^2. v must have unit norm within 1e-10.
double mu_v(const Eigen::MatrixXd& X, const Eigen::VectorXd& v);

// Perron vector of D^-1/2 (A + I) D^-1/2 by power iteration, sign fixed so the
// entries sum to a positive value. Throws NumericError without convergence.
Eigen::VectorXd dominant_vector(const Graph& g, int max_iter = 100000, double tol = 1e-13);

// Alternative collapse direction: top left singular vector of a feature matrix.
Eigen::VectorXd top_left_singular_vector(const Eigen::MatrixXd& X);

enum class VectorSource { structure, features };
VectorSource parse_vector_source(const std::string& name);
std::string to_string(VectorSource s);

// mu_v of the encoding anchor [0 || X_ENC]: the first noisy_width columns of
// x_in are zeroed.
double measure_gamma(const Eigen::MatrixXd& x_in, int noisy_width, const Eigen::VectorXd& v);

// Running maximum of ||P G||_F^2 over the snapshots, in order. Throws
// ContractError when empty.
std::vector<double> measure_C(const std::vector<const Snapshot*>& snaps, const Eigen::VectorXd& v);

struct StepDiagnostics {
    int step = 0;
    double noise = 0.0;
    double mu_v = 0.0;       // mu_v(X_out)
    double gamma_t = 0.0;    // mu_v([0 || X_ENC]) at this step
    double anchor = 0.0;     // ||P S_X X_in||^2 at this step
    double c_t = 0.0;        // ||P G||^2 at this step
    double C_running = 0.0;  // max of c over steps so far
    double margin = 0.0;     // mu_v - (gamma/2 - C), chain-level gamma and C
    bool bound_ok = true;
    std::vector<double> erank, numrank;
};

struct ChainDiagnostics {
    int chain = 0;
    int n = 0;
    bool applicable = true;  // residual on
    double gamma = 0.0;      // min over steps of gamma_t
    double C = 0.0;          // max over steps of c_t
    bool nonvacuous = false; // gamma > 2 C
    bool degenerate = false; // gamma ~ 0
    std::vector<StepDiagnostics> steps;
};

// Evaluates mu_v(X_out) >= gamma/2 - C on every snapshot of every chain. v is
// computed from the chain's final graph (structure) or its last X_out (features).
// slack is the tolerance used for bound_ok.
std::vector<ChainDiagnostics> check_theorem(const std::vector<Snapshot>& snaps, const std::vector<Graph>& final_graphs,
                                            VectorSource source = VectorSource::structure, double slack = 1e-8);

std::string diagnostics_csv(const std::vector<ChainDiagnostics>& chains);

// ||P(A+B)||^2 - (0.5 ||PB||^2 - ||PA||^2); nonnegative by the two-term bound.
double two_term_gap(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& v);

// exp(H(sigma / sum sigma)); throws ContractError on an all-zero matrix.
double erank(const Eigen::MatrixXd& X);
// ||X||_F^2 / sigma_max^2; throws ContractError on an all-zero matrix.
double numrank(const Eigen::MatrixXd& X);

// Pearson r; empty when either series has zero variance.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct DepthPoint {
    int depth = 0;
    double validity = 0.0;
    double mean_erank = 0.0;
    double mean_numrank = 0.0;
};

struct CorrelationReport {
    std::optional<double> r_erank, r_numrank;
    std::optional<double> validity_ratio;  // validity(max depth) / validity(min depth); empty if the latter is 0
};

// Needs at least three depths; throws ContractError otherwise.
CorrelationReport correlation_study(std::vector<DepthPoint> points);

Eigen::MatrixXd as_matrix(const std::vector<double>& values, int rows, int cols);

}  // namespace gengnn
