#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smoothlab/loss.hpp"
#include "smoothlab/model.hpp"

namespace smoothlab {

/// A model together with the data it is evaluated on.
struct Instance {
    GnnModel model;
    Matrix x0;
    LabelSet labels;
};

/// Width-1 identity GNN with all weights 1, X^(0) = 1_n and targets 0.
/// Every gradient has norm 1 while every backward energy is 0.
/// A null propagation uses ring_with_chords(n).
Instance constant_gradient_gnn(std::size_t n, std::size_t depth,
                               std::shared_ptr<const PropagationMatrix> propagation = nullptr);

/// ±1 labels with probability ½ each, one per node, as an n x 1 regression target.
Matrix rademacher_column(std::size_t n, std::uint64_t seed, std::uint64_t stream);

struct SpuriousPoint {
    GnnModel model;
    double label_mean_norm = 0.0;
    double centering_tolerance = 0.0;
    std::vector<std::string> warnings;
};

/// Copy of `base` with the output weight zeroed. Off-regime inputs (labels not
/// centered within `centering_tolerance`, xi_2(alpha) <= 0) are recorded as
/// warnings rather than rejected. The default tolerance is 3/√n.
SpuriousPoint spurious_stationary_gnn(const GnnModel& base, const LabelSet& labels,
                                      std::optional<double> centering_tolerance = std::nullopt);

struct MlpCounterexample {
    Instance instance;
    /// Exact gradient values: 0 everywhere except -(1/n) Σ x_i y_i = -1 at the zeroed layer.
    std::vector<double> expected_grads;
    std::size_t zeroed_layer = 0;
};

/// Width-1 identity MLP, all weights 1 except W^(k_zero) = 0, with
/// (x_i, y_i) uniform on {(1, 1), (-1, -1)}. A non-null propagation gives the
/// GNN variant of the same construction (expected_grads then left empty).
MlpCounterexample mlp_counterexample(std::size_t n, std::size_t depth, std::size_t k_zero, std::uint64_t seed,
                                     std::shared_ptr<const PropagationMatrix> propagation = nullptr);

struct SmallInstanceParams {
    std::size_t n = 12;
    std::size_t depth = 3;
    std::size_t width = 4;
    TaskKind task = TaskKind::regression;
    ActivationKind activation = ActivationKind::centered_softplus;
    /// Probability of each extra edge on top of the ring.
    double extra_edge_prob = 0.1;
    std::uint64_t seed = 0;
};

/// Random GNN on ring_with_chords(n) plus random extra edges: Gaussian
/// features and weights, regression targets in the unit ball (2 outputs) or
/// 3 random classes. Sized for finite-difference checks.
Instance random_small_instance(const SmallInstanceParams& params);

} // namespace smoothlab
