#pragma once

#include <cstddef>
#include <vector>

#include "smoothlab/loss.hpp"
#include "smoothlab/model.hpp"

namespace smoothlab {

/// Backward signals and weight gradients, both indexed by layer k = 0..L.
struct BackwardTrace {
    /// B^(k) = ∂L/∂H^(k), n x d_{k+1}
    std::vector<Matrix> b;
    /// ∂L/∂W^(k) = F^(k)ᵀ B^(k), d_k x d_{k+1}
    std::vector<Matrix> grads;
};

/// Explicit recursion B^(k) = ρ′(H^(k)) ⊙ (P B^(k+1) W^(k+1)ᵀ), starting from
/// B^(L) = ∂L/∂H^(L). P is symmetric, so Pᵀ = P.
BackwardTrace backward(const GnnModel& model, const ForwardTrace& trace, const LabelSet& labels);

/// Central differences of the loss, one full forward pass per probe.
/// `step` must lie in [1e-8, 1e-2].
std::vector<Matrix> finite_difference_gradients(const GnnModel& model, const Matrix& x0,
                                                const LabelSet& labels, double step = 1e-4);

struct GradCheckReport {
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;
    std::size_t worst_layer = 0;
};

inline constexpr std::size_t kGradCheckMaxParams = 20000;

/// Entrywise comparison of backward() against finite differences; relative
/// error uses max(|a|, |b|, 1e-8) as denominator.
GradCheckReport grad_check(const GnnModel& model, const Matrix& x0, const LabelSet& labels,
                           double step = 1e-4);

} // namespace smoothlab
