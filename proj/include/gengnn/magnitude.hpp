#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gengnn/graph.hpp"

namespace gengnn {

// One row per graph: mean-pooled final node states of a frozen, randomly
// initialized gine GenGNN.
Eigen::MatrixXd embed_graphs(const GraphSet& set, std::uint64_t seed, int width = 32, int depth = 3);

// Exact duplicate rows (after the first occurrence) are moved by N(0, 1e-9^2)
// noise drawn from `seed`. Returns the number of rows moved.
int jitter_duplicates(Eigen::MatrixXd& points, std::uint64_t seed);

// Sum of the entries of Z^-1, Z_ij = exp(-t |x_i - x_j|). Retries with
// Z + 1e-10 I when Cholesky fails; throws NumericError naming t otherwise.
// Points are used as given; see jitter_duplicates.
double magnitude(const Eigen::MatrixXd& points, double t);

std::vector<double> log_grid(double t0, double t1, int count);

// Smallest scale (to ~1e-6 relative) where Mag reaches `fraction` of the
// point count, searching upward from t0.
double scale_at_fraction(const Eigen::MatrixXd& points, double fraction, double t0 = 1e-2);

struct MagnitudeProfile {
    std::vector<double> t;
    std::vector<double> values;
    double t0 = 0.0;
    double t_cut = 0.0;
};

MagnitudeProfile magnitude_profile(const Eigen::MatrixXd& points, const std::vector<double>& grid);

struct MagDiffOptions {
    double t0 = 1e-2;
    int grid_points = 64;
    double fraction = 0.95;
    std::uint64_t jitter_seed = 0;
};

struct MagDiffResult {
    double value = 0.0;
    MagnitudeProfile ref, gen;
    std::vector<std::string> notes;  // duplicate jitter, monotonicity violations
};

// Trapezoid integral of Mag_ref - Mag_gen over the given shared grid.
MagDiffResult magdiff(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& gen, const std::vector<double>& grid,
                      std::uint64_t jitter_seed = 0);
// Grid of opt.grid_points log-spaced scales from opt.t0 to the scale where
// Mag of the distinct rows of ref (1e-8 relative) reaches opt.fraction of
// their count.
MagDiffResult magdiff(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& gen, const MagDiffOptions& opt = {});

// Columns t, Mag_ref, Mag_gen.
std::string profile_csv(const MagDiffResult& r);

}  // namespace gengnn
