#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance run. They avoid the library's algorithms on purpose.

#include <algorithm>
#include <utility>
#include <vector>

#include "gengnn/eval.hpp"
#include "gengnn/graph.hpp"

namespace gengnn::oracle {

struct Template {
    int size;
    std::vector<std::pair<int, int>> edges;
    std::vector<int> orbits;
};

inline const std::vector<Template>& templates() {
    static const std::vector<Template> t{
        {2, {{0, 1}}, {0, 0}},
        {3, {{0, 1}, {1, 2}}, {1, 2, 1}},
        {3, {{0, 1}, {1, 2}, {0, 2}}, {3, 3, 3}},
        {4, {{0, 1}, {1, 2}, {2, 3}}, {4, 5, 5, 4}},
        {4, {{0, 1}, {0, 2}, {0, 3}}, {7, 6, 6, 6}},
        {4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}, {8, 8, 8, 8}},
        {4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}}, {10, 10, 11, 9}},
        {4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}}, {13, 12, 13, 12}},
        {4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, {14, 14, 14, 14}},
    };
    return t;
}

// Every node subset of size 2..4 is matched against the labeled graphlet
// templates under all orderings.
inline OrbitCounts brute_force_orbits(const Graph& g) {
    OrbitCounts out(static_cast<std::size_t>(g.n()));
    for (auto& r : out) r.fill(0);
    const int n = g.n();
    for (int size = 2; size <= std::min(4, n); ++size) {
        std::vector<int> mask(static_cast<std::size_t>(n), 0);
        std::fill(mask.end() - size, mask.end(), 1);
        do {
            std::vector<int> nodes;
            for (int i = 0; i < n; ++i)
                if (mask[static_cast<std::size_t>(i)]) nodes.push_back(i);
            bool matched = false;
            for (const Template& t : templates()) {
                if (t.size != size || matched) continue;
                std::vector<int> perm = nodes;
                std::sort(perm.begin(), perm.end());
                do {
                    bool same = true;
                    for (int a = 0; a < size && same; ++a)
                        for (int b = a + 1; b < size && same; ++b) {
                            const bool in_t = std::find(t.edges.begin(), t.edges.end(), std::pair{a, b}) != t.edges.end() ||
                                              std::find(t.edges.begin(), t.edges.end(), std::pair{b, a}) != t.edges.end();
                            same = in_t == g.has_edge(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
                        }
                    if (same) {
                        for (int a = 0; a < size; ++a)
                            ++out[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])][static_cast<std::size_t>(t.orbits[static_cast<std::size_t>(a)])];
                        matched = true;
                    }
                } while (!matched && std::next_permutation(perm.begin(), perm.end()));
            }
        } while (std::next_permutation(mask.begin(), mask.end()));
    }
    return out;
}

// Expected rate over an enumerated clean endpoint: for target x1 the
// conditional rate toward j is [j == x1][j != x] / (1 - t).
inline std::vector<double> rate_oracle(int x, const std::vector<double>& p1, double t, double dt) {
    const std::size_t d = p1.size();
    std::vector<double> out(d, 0.0);
    out[static_cast<std::size_t>(x)] = 1.0;
    for (std::size_t x1 = 0; x1 < d; ++x1)
        for (std::size_t j = 0; j < d; ++j) {
            if (static_cast<int>(j) == x) continue;
            const double r = (j == x1 ? 1.0 : 0.0) / (1.0 - t) * p1[x1];
            out[j] += dt * r;
            out[static_cast<std::size_t>(x)] -= dt * r;
        }
    return out;
}

}  // namespace gengnn::oracle
