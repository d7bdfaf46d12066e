#pragma once

#include <vector>

#include "gengnn/graph.hpp"

namespace gengnn {

// M = D^{-1} A; rows of isolated nodes stay zero. Row-major n x n.
std::vector<double> random_walk_matrix(const Graph& g);

struct RRWPEncoding {
    int n = 0;
    int K = 0;
    std::vector<double> P;  // n * n * K, P[(i*n + j)*K + k] = (M^k)_ij

    double at(int i, int j, int k) const {
        return P[(static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)) * static_cast<std::size_t>(K) +
                 static_cast<std::size_t>(k)];
    }
    // Diagonal K-vectors, n * K.
    std::vector<double> node_part() const;
    // Off-diagonal K-vectors, n * n * K, zero on the diagonal.
    std::vector<double> edge_part() const;
};

// Stacks [I, M, M^2, ..., M^{K-1}].
RRWPEncoding rrwp(const Graph& g, int K);

}  // namespace gengnn
