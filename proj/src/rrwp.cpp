#include "gengnn/rrwp.hpp"

#include <Eigen/Core>

#include "gengnn/errors.hpp"

namespace gengnn {

std::vector<double> random_walk_matrix(const Graph& g) {
    const auto n = static_cast<std::size_t>(g.n());
    std::vector<double> M = g.adjacency();
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += M[i * n + j];
        if (deg > 0)
            for (std::size_t j = 0; j < n; ++j) M[i * n + j] /= deg;
    }
    return M;
}

RRWPEncoding rrwp(const Graph& g, int K) {
    if (K < 1) throw InvalidArgument("rrwp: K must be >= 1, got " + std::to_string(K));
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const int n = g.n();
    const auto rw = random_walk_matrix(g);
    const Mat M = Eigen::Map<const Mat>(rw.data(), n, n);
    RRWPEncoding enc;
    enc.n = n;
    enc.K = K;
    enc.P.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n) * static_cast<std::size_t>(K), 0.0);
    Mat power = Mat::Identity(n, n);
    for (int k = 0; k < K; ++k) {
        if (k > 0) power = (power * M).eval();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                enc.P[(static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)) * static_cast<std::size_t>(K) +
                      static_cast<std::size_t>(k)] = power(i, j);
    }
    return enc;
}

std::vector<double> RRWPEncoding::node_part() const {
    std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(K));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k) out[static_cast<std::size_t>(i * K + k)] = at(i, i, k);
    return out;
}

std::vector<double> RRWPEncoding::edge_part() const {
    std::vector<double> out = P;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k)
            out[(static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)) * static_cast<std::size_t>(K) +
                static_cast<std::size_t>(k)] = 0.0;
    return out;
}

}  // namespace gengnn
