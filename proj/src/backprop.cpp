#include "smoothlab/backprop.hpp"

#include <algorithm>
#include <cmath>

#include "smoothlab/error.hpp"

namespace smoothlab {

BackwardTrace backward(const GnnModel& model, const ForwardTrace& trace, const LabelSet& labels) {
    const std::size_t depth = model.depth();
    require(trace.h.size() == depth + 1 && trace.f.size() == depth + 1,
            "backward: trace has " + std::to_string(trace.h.size()) + " layers, model has " +
                std::to_string(depth + 1));
    for (std::size_t k = 0; k <= depth; ++k)
        require(trace.h[k].cols() == model.weight(k).cols() && trace.f[k].cols() == model.weight(k).rows(),
                "backward: trace does not match the model at layer " + std::to_string(k));

    BackwardTrace out;
    out.b.resize(depth + 1);
    out.grads.resize(depth + 1);
    out.b[depth] = output_gradient(labels, trace.output());
    for (std::size_t k = depth; k-- > 0;) {
        const Matrix propagated = model.propagate(out.b[k + 1]);
        const Matrix pulled = matmul_nt(propagated, model.weight(k + 1));
        out.b[k] = hadamard(model.activation().derivative(trace.h[k]), pulled);
    }
    for (std::size_t k = 0; k <= depth; ++k) out.grads[k] = matmul_tn(trace.f[k], out.b[k]);
    return out;
}

std::vector<Matrix> finite_difference_gradients(const GnnModel& model, const Matrix& x0,
                                                const LabelSet& labels, double step) {
    require(step >= 1e-8 && step <= 1e-2, "finite_difference_gradients: step must lie in [1e-8, 1e-2]");
    GnnModel probe = model;
    std::vector<Matrix> grads;
    grads.reserve(model.depth() + 1);
    auto loss_at = [&](std::size_t k, const Matrix& w) {
        probe.set_weight(k, w);
        return loss_value(labels, forward(probe, x0).output());
    };
    for (std::size_t k = 0; k <= model.depth(); ++k) {
        const Matrix& base = model.weight(k);
        Matrix g(base.rows(), base.cols());
        Matrix w = base;
        for (std::size_t idx = 0; idx < w.size(); ++idx) {
            const double orig = base.values()[idx];
            w.values()[idx] = orig + step;
            const double up = loss_at(k, w);
            w.values()[idx] = orig - step;
            const double down = loss_at(k, w);
            w.values()[idx] = orig;
            g.values()[idx] = (up - down) / (2.0 * step);
        }
        probe.set_weight(k, base);
        grads.push_back(std::move(g));
    }
    return grads;
}

GradCheckReport grad_check(const GnnModel& model, const Matrix& x0, const LabelSet& labels, double step) {
    require(model.parameter_count() <= kGradCheckMaxParams,
            "grad_check: model has " + std::to_string(model.parameter_count()) +
                " parameters; the finite-difference oracle is limited to " +
                std::to_string(kGradCheckMaxParams) + ", use a smaller model");
    const auto analytic = backward(model, forward(model, x0), labels).grads;
    const auto numeric = finite_difference_gradients(model, x0, labels, step);
    GradCheckReport report;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        auto a = analytic[k].values();
        auto b = numeric[k].values();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double abs_err = std::abs(a[i] - b[i]);
            const double rel_err = abs_err / std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
            report.max_abs_err = std::max(report.max_abs_err, abs_err);
            if (rel_err > report.max_rel_err) {
                report.max_rel_err = rel_err;
                report.worst_layer = k;
            }
        }
    }
    return report;
}

} // namespace smoothlab
