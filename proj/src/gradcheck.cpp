#include "gengnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gengnn/errors.hpp"

namespace gengnn {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double tol, double step,
                           double abs_floor) {
    GradCheckReport report;
    report.tol = tol;
    std::vector<bool> previous(leaves.size());
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        previous[l] = leaves[l].requires_grad();
        leaves[l].set_requires_grad(true);
        leaves[l].zero_grad();
    }

    std::vector<std::vector<double>> analytic(leaves.size());
    {
        Tape tape;
        Tensor loss = f();
        tape.backward(loss);
    }
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        if (leaves[l].has_grad())
            analytic[l].assign(leaves[l].grad().begin(), leaves[l].grad().end());
        else
            analytic[l].assign(leaves[l].numel(), 0.0);
        leaves[l].zero_grad();
    }

    for (std::size_t l = 0; l < leaves.size(); ++l) {
        auto data = leaves[l].mutable_data();
        for (std::size_t k = 0; k < data.size(); ++k) {
            const double saved = data[k];
            data[k] = saved + step;
            const double up = f().item();
            data[k] = saved - step;
            const double down = f().item();
            data[k] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[l][k];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), abs_floor});
            if (!std::isfinite(rel)) throw NumericError("grad_check: non-finite gradient");
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_leaf = l;
                report.worst_index = k;
            }
            ++report.checked;
        }
    }
    for (std::size_t l = 0; l < leaves.size(); ++l) leaves[l].set_requires_grad(previous[l]);
    report.passed = report.max_rel_error < tol;
    return report;
}

}  // namespace gengnn
