#include "gengnn/magnitude.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "gengnn/denoiser.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

Eigen::MatrixXd embed_graphs(const GraphSet& set, std::uint64_t seed, int width, int depth) {
    if (set.empty()) return Eigen::MatrixXd(0, width);
    set.check_consistent();
    DenoiserConfig cfg;
    cfg.backbone = Backbone::gine;
    cfg.layers = depth;
    cfg.hidden_x = cfg.hidden_y = cfg.ffn = width;
    cfg.hidden_e = std::max(1, width / 2);
    cfg.readout_x = width;
    cfg.readout_e = cfg.hidden_e;
    cfg.dropout = 0.0;
    cfg.node_classes = set.graphs[0].node_classes();
    cfg.edge_classes = set.graphs[0].edge_classes();
    const Denoiser model(cfg, seed);

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(set.size()), width);
    for (std::size_t k = 0; k < set.size(); ++k) {
        const Graph& g = set.graphs[k];
        if (g.n() == 0) continue;
        const DenoiserOutput res = model.forward(model.prepare({&g}, {0.0}), false, nullptr, true);
        const auto x = res.trace.back().x_next.data();
        for (int i = 0; i < g.n(); ++i)
            for (int c = 0; c < width; ++c)
                out(static_cast<Eigen::Index>(k), c) += x[static_cast<std::size_t>(i * width + c)] / g.n();
    }
    return out;
}

int jitter_duplicates(Eigen::MatrixXd& points, std::uint64_t seed) {
    const Eigen::Index n = points.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto row_less = [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < points.cols(); ++c)
            if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
        return a < b;
    };
    std::sort(order.begin(), order.end(), row_less);
    Rng rng(seed);
    int moved = 0;
    for (std::size_t k = 1; k < order.size(); ++k) {
        const Eigen::Index a = order[k - 1], b = order[k];
        bool same = true;
        for (Eigen::Index c = 0; c < points.cols() && same; ++c) same = points(a, c) == points(b, c);
        if (!same) continue;
        // The unmoved copy is compared against the next one in the run.
        order[k] = a;
        for (Eigen::Index c = 0; c < points.cols(); ++c) points(b, c) += 1e-9 * rng.normal();
        ++moved;
    }
    return moved;
}

double magnitude(const Eigen::MatrixXd& points, double t) {
    if (!(t > 0.0)) throw InvalidArgument("magnitude needs a positive scale, got " + std::to_string(t));
    const Eigen::Index n = points.rows();
    if (n == 0) return 0.0;
    Eigen::MatrixXd Z(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Z(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) Z(i, j) = Z(j, i) = std::exp(-t * (points.row(i) - points.row(j)).norm());
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    Eigen::LLT<Eigen::MatrixXd> llt(Z);
    if (llt.info() != Eigen::Success) {
        Z.diagonal().array() += 1e-10;
        llt.compute(Z);
        if (llt.info() != Eigen::Success) {
            std::ostringstream os;
            os << "magnitude: similarity matrix is singular at t = " << t << " even after regularization";
            throw NumericError(os.str());
        }
    }
    const double m = ones.dot(llt.solve(ones));
    if (!std::isfinite(m)) {
        std::ostringstream os;
        os << "magnitude: non-finite value at t = " << t;
        throw NumericError(os.str());
    }
    return m;
}

std::vector<double> log_grid(double t0, double t1, int count) {
    if (!(t0 > 0.0) || !(t1 > t0) || count < 2) throw InvalidArgument("log grid needs 0 < t0 < t1 and at least two points");
    std::vector<double> g(static_cast<std::size_t>(count));
    const double a = std::log(t0), b = std::log(t1);
    for (int k = 0; k < count; ++k) g[static_cast<std::size_t>(k)] = std::exp(a + (b - a) * k / (count - 1));
    g.front() = t0;
    g.back() = t1;
    return g;
}

double scale_at_fraction(const Eigen::MatrixXd& points, double fraction, double t0) {
    const double target = fraction * static_cast<double>(points.rows());
    if (points.rows() <= 1 || magnitude(points, t0) >= target) return t0;
    double lo = t0, hi = 2.0 * t0;
    while (magnitude(points, hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw NumericError("magnitude never reaches the target fraction; are all points identical?");
    }
    while (hi / lo > 1.0 + 1e-6) {
        const double mid = std::sqrt(lo * hi);
        (magnitude(points, mid) < target ? lo : hi) = mid;
    }
    return hi;
}

MagnitudeProfile magnitude_profile(const Eigen::MatrixXd& points, const std::vector<double>& grid) {
    if (grid.size() < 2) throw InvalidArgument("magnitude profile needs at least two scales");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1])) throw InvalidArgument("magnitude grid must be strictly increasing");
    MagnitudeProfile p;
    p.t = grid;
    p.t0 = grid.front();
    p.t_cut = grid.back();
    for (double t : grid) p.values.push_back(magnitude(points, t));
    return p;
}

namespace {

void note_monotonicity(const MagnitudeProfile& p, const char* which, std::vector<std::string>& notes) {
    for (std::size_t k = 1; k < p.values.size(); ++k)
        if (p.values[k] < p.values[k - 1] - 1e-8) {
            std::ostringstream os;
            os << "Mag_" << which << " decreases between t = " << p.t[k - 1] << " and t = " << p.t[k] << " by "
               << p.values[k - 1] - p.values[k];
            notes.push_back(os.str());
        }
}

Eigen::MatrixXd jittered(const Eigen::MatrixXd& pts, std::uint64_t seed, const char* which, std::vector<std::string>& notes) {
    Eigen::MatrixXd out = pts;
    const int moved = jitter_duplicates(out, seed);
    if (moved > 0) notes.push_back(std::string(which) + ": jittered " + std::to_string(moved) + " duplicate points by 1e-9");
    return out;
}

}  // namespace

MagDiffResult magdiff(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& gen, const std::vector<double>& grid, std::uint64_t jitter_seed) {
    if (ref.rows() == 0 || gen.rows() == 0) throw ContractError("magdiff needs two nonempty point sets");
    MagDiffResult r;
    const Eigen::MatrixXd a = jittered(ref, jitter_seed, "ref", r.notes);
    const Eigen::MatrixXd b = jittered(gen, jitter_seed, "gen", r.notes);
    r.ref = magnitude_profile(a, grid);
    r.gen = magnitude_profile(b, grid);
    note_monotonicity(r.ref, "ref", r.notes);
    note_monotonicity(r.gen, "gen", r.notes);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double f0 = r.ref.values[k - 1] - r.gen.values[k - 1], f1 = r.ref.values[k] - r.gen.values[k];
        r.value += 0.5 * (f0 + f1) * (grid[k] - grid[k - 1]);
    }
    return r;
}

MagDiffResult magdiff(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& gen, const MagDiffOptions& opt) {
    if (ref.rows() == 0) throw ContractError("magdiff needs two nonempty point sets");
    // Duplicates (exact, or equal up to rounding as for isomorphic graphs)
    // only separate at absurd scales, so the cutoff is taken from the
    // distinct rows.
    const double tol = 1e-8 * (1.0 + ref.rowwise().norm().maxCoeff());
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ref.rows(); ++i) {
        bool dup = false;
        for (Eigen::Index k : keep) dup = dup || (ref.row(i) - ref.row(k)).norm() <= tol;
        if (!dup) keep.push_back(i);
    }
    double t_cut = scale_at_fraction(ref(keep, Eigen::all), opt.fraction, opt.t0);
    if (t_cut <= opt.t0) t_cut = 10.0 * opt.t0;
    return magdiff(ref, gen, log_grid(opt.t0, t_cut, opt.grid_points), opt.jitter_seed);
}

std::string profile_csv(const MagDiffResult& r) {
    std::ostringstream os;
    os << std::setprecision(12) << "t,mag_ref,mag_gen\n";
    for (std::size_t k = 0; k < r.ref.t.size(); ++k) os << r.ref.t[k] << ',' << r.ref.values[k] << ',' << r.gen.values[k] << '\n';
    return os.str();
}

}  // namespace gengnn
