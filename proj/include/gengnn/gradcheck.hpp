#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gengnn/tensor.hpp"

namespace gengnn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_leaf = 0;
    std::size_t worst_index = 0;
    double tol = 0.0;
    bool passed = false;
    std::string note;
};

// Compares tape gradients of the scalar program f against central finite
// differences for every element of every leaf. The relative error of an entry
// is |a - n| / max(|a|, |n|, abs_floor); the floor keeps entries whose true
// gradient is ~0 from turning rounding noise into huge ratios.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double tol, double step = 1e-5,
                           double abs_floor = 1e-6);

}  // namespace gengnn
