#include "gengnn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "gengnn/errors.hpp"

namespace gengnn {

Eigen::MatrixXd as_matrix(const std::vector<double>& values, int rows, int cols) {
    if (values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw ShapeError("as_matrix: " + std::to_string(values.size()) + " values for a " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " matrix");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, cols);
}

double mu_v(const Eigen::MatrixXd& X, const Eigen::VectorXd& v) {
    if (v.size() != X.rows()) throw ShapeError("mu_v: vector of length " + std::to_string(v.size()) + " for " + std::to_string(X.rows()) + " rows");
    if (std::abs(v.norm() - 1.0) > 1e-10) throw ContractError("mu_v: v must have unit norm (got " + std::to_string(v.norm()) + ")");
    return (X - v * (v.transpose() * X)).squaredNorm();
}

Eigen::VectorXd dominant_vector(const Graph& g, int max_iter, double tol) {
    const int n = g.n();
    if (n == 0) throw ContractError("dominant_vector of an empty graph");
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (g.has_edge(i, j)) S(i, j) = 1.0;
    const Eigen::VectorXd dinv = S.rowwise().sum().cwiseSqrt().cwiseInverse();
    S = dinv.asDiagonal() * S * dinv.asDiagonal();
    // (S + I)/2 has the same eigenvectors and a nonnegative spectrum.
    const Eigen::MatrixXd M = 0.5 * (S + Eigen::MatrixXd::Identity(n, n));
    Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = M * v;
        w.normalize();
        const double change = (w - v).norm();
        v = w;
        if (change < tol) {
            if (v.sum() < 0) v = -v;
            return v;
        }
    }
    throw NumericError("dominant_vector: power iteration did not converge in " + std::to_string(max_iter) + " iterations");
}

Eigen::VectorXd top_left_singular_vector(const Eigen::MatrixXd& X) {
    if (X.size() == 0 || X.isZero(0.0)) throw ContractError("top_left_singular_vector of a zero matrix");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
    Eigen::VectorXd u = svd.matrixU().col(0);
    if (u.sum() < 0) u = -u;
    return u;
}

VectorSource parse_vector_source(const std::string& name) {
    if (name == "structure") return VectorSource::structure;
    if (name == "features") return VectorSource::features;
    throw ConfigError("unknown collapse-vector source '" + name + "' (expected structure or features)");
}

std::string to_string(VectorSource s) { return s == VectorSource::structure ? "structure" : "features"; }

double measure_gamma(const Eigen::MatrixXd& x_in, int noisy_width, const Eigen::VectorXd& v) {
    Eigen::MatrixXd anchor = x_in;
    anchor.leftCols(std::min<Eigen::Index>(noisy_width, anchor.cols())).setZero();
    return mu_v(anchor, v);
}

std::vector<double> measure_C(const std::vector<const Snapshot*>& snaps, const Eigen::VectorXd& v) {
    if (snaps.empty()) throw ContractError("measure_C needs snapshots; rerun sampling with snapshots enabled");
    std::vector<double> out;
    double best = 0.0;
    for (const Snapshot* s : snaps) {
        best = std::max(best, mu_v(as_matrix(s->g, s->n, s->width), v));
        out.push_back(best);
    }
    return out;
}

std::vector<ChainDiagnostics> check_theorem(const std::vector<Snapshot>& snaps, const std::vector<Graph>& final_graphs,
                                            VectorSource source, double slack) {
    if (snaps.empty()) throw ContractError("check_theorem needs snapshots; rerun sampling with snapshots enabled");
    std::map<int, std::vector<const Snapshot*>> by_chain;
    for (const Snapshot& s : snaps) by_chain[s.chain].push_back(&s);

    std::vector<ChainDiagnostics> out;
    for (const auto& [chain, list] : by_chain) {
        ChainDiagnostics cd;
        cd.chain = chain;
        cd.n = list.front()->n;
        cd.applicable = list.front()->residual;
        Eigen::VectorXd v;
        if (source == VectorSource::structure) {
            if (chain < 0 || static_cast<std::size_t>(chain) >= final_graphs.size())
                throw ContractError("check_theorem: no final graph for chain " + std::to_string(chain));
            v = dominant_vector(final_graphs[static_cast<std::size_t>(chain)]);
        } else {
            v = top_left_singular_vector(as_matrix(list.back()->x_out, cd.n, list.back()->width));
        }
        const std::vector<double> running = measure_C(list, v);
        cd.gamma = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < list.size(); ++k) {
            const Snapshot& s = *list[k];
            StepDiagnostics sd;
            sd.step = s.step;
            sd.noise = s.noise;
            const Eigen::MatrixXd x_in = as_matrix(s.x_in, s.n, s.width);
            sd.mu_v = mu_v(as_matrix(s.x_out, s.n, s.width), v);
            sd.gamma_t = measure_gamma(x_in, s.noisy_width, v);
            sd.anchor = mu_v(x_in, v);
            sd.c_t = mu_v(as_matrix(s.g, s.n, s.width), v);
            sd.C_running = running[k];
            sd.erank = s.layer_erank;
            sd.numrank = s.layer_numrank;
            cd.gamma = std::min(cd.gamma, sd.gamma_t);
            cd.steps.push_back(std::move(sd));
        }
        cd.C = running.back();
        cd.nonvacuous = cd.gamma > 2.0 * cd.C;
        cd.degenerate = cd.gamma < 1e-12;
        for (StepDiagnostics& sd : cd.steps) {
            sd.margin = sd.mu_v - (0.5 * cd.gamma - cd.C);
            sd.bound_ok = !cd.applicable || sd.margin >= -slack;
        }
        out.push_back(std::move(cd));
    }
    return out;
}

std::string diagnostics_csv(const std::vector<ChainDiagnostics>& chains) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "chain,step,noise,mu_v,gamma_t,anchor,c_t,C_running,gamma,C,bound,margin,bound_ok,applicable,nonvacuous,layer_erank,layer_numrank\n";
    auto join = [](const std::vector<double>& v) {
        std::ostringstream s;
        s << std::setprecision(17);
        for (std::size_t k = 0; k < v.size(); ++k) s << (k ? ";" : "") << v[k];
        return s.str();
    };
    for (const ChainDiagnostics& c : chains)
        for (const StepDiagnostics& s : c.steps)
            os << c.chain << ',' << s.step << ',' << s.noise << ',' << s.mu_v << ',' << s.gamma_t << ',' << s.anchor << ',' << s.c_t << ','
               << s.C_running << ',' << c.gamma << ',' << c.C << ',' << (0.5 * c.gamma - c.C) << ',' << s.margin << ','
               << (c.applicable ? (s.bound_ok ? "1" : "0") : "na") << ',' << (c.applicable ? 1 : 0) << ',' << (c.nonvacuous ? 1 : 0)
               << ',' << join(s.erank) << ',' << join(s.numrank) << '\n';
    return os.str();
}

double two_term_gap(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& v) {
    return mu_v(A + B, v) - (0.5 * mu_v(B, v) - mu_v(A, v));
}

namespace {

Eigen::VectorXd singular_values(const Eigen::MatrixXd& X, const char* what) {
    if (X.size() == 0 || X.isZero(0.0)) throw ContractError(std::string(what) + " of an all-zero matrix is undefined");
    return Eigen::BDCSVD<Eigen::MatrixXd>(X).singularValues();
}

}  // namespace

double erank(const Eigen::MatrixXd& X) {
    const Eigen::VectorXd s = singular_values(X, "erank");
    const double total = s.sum();
    double h = 0.0;
    for (double v : s) {
        const double p = v / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::exp(h);
}

double numrank(const Eigen::MatrixXd& X) {
    const Eigen::VectorXd s = singular_values(X, "numrank");
    return X.squaredNorm() / (s(0) * s(0));
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("pearson: series differ in length");
    if (x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport correlation_study(std::vector<DepthPoint> points) {
    if (points.size() < 3) throw ContractError("correlation study needs at least 3 depths, got " + std::to_string(points.size()));
    std::sort(points.begin(), points.end(), [](const DepthPoint& a, const DepthPoint& b) { return a.depth < b.depth; });
    std::vector<double> val, er, nr;
    for (const DepthPoint& p : points) {
        val.push_back(p.validity);
        er.push_back(p.mean_erank);
        nr.push_back(p.mean_numrank);
    }
    CorrelationReport r;
    r.r_erank = pearson(val, er);
    r.r_numrank = pearson(val, nr);
    if (points.front().validity > 0.0) r.validity_ratio = points.back().validity / points.front().validity;
    return r;
}

}  // namespace gengnn
