#include "smoothlab/constructions.hpp"

#include <cmath>

#include "smoothlab/bounds.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/rng.hpp"

namespace smoothlab {

namespace {

std::vector<Matrix> unit_weights(std::size_t depth) {
    return std::vector<Matrix>(depth + 1, Matrix(1, 1, 1.0));
}

} // namespace

Instance constant_gradient_gnn(std::size_t n, std::size_t depth, std::shared_ptr<const PropagationMatrix> propagation) {
    require(n >= 2, "constant_gradient_gnn: n must be at least 2");
    require(depth >= 1, "constant_gradient_gnn: depth must be at least 1");
    if (!propagation)
        propagation = std::make_shared<const PropagationMatrix>(build_propagation(ring_with_chords(n)));
    require(propagation->size() == n, "constant_gradient_gnn: propagation size does not match n");
    GnnModel model(unit_weights(depth), Activation(ActivationKind::identity), std::move(propagation));
    return {std::move(model), Matrix(n, 1, 1.0), LabelSet::regression(Matrix(n, 1, 0.0))};
}

Matrix rademacher_column(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
    CounterRng rng(seed, stream);
    Matrix out(n, 1);
    for (std::size_t i = 0; i < n; ++i) out(i, 0) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return out;
}

SpuriousPoint spurious_stationary_gnn(const GnnModel& base, const LabelSet& labels,
                                      std::optional<double> centering_tolerance) {
    require(labels.is_regression(), "spurious_stationary_gnn: needs regression labels");
    const std::size_t n = labels.node_count();
    require(n >= 1, "spurious_stationary_gnn: no labels");

    SpuriousPoint out{base, 0.0, 0.0, {}};
    auto mean = column_sums(labels.targets());
    for (double& m : mean) m /= static_cast<double>(n);
    out.label_mean_norm = euclidean_norm(mean);
    out.centering_tolerance = centering_tolerance.value_or(3.0 / std::sqrt(static_cast<double>(n)));
    if (out.label_mean_norm > out.centering_tolerance)
        out.warnings.push_back("labels not centered: mean norm " + std::to_string(out.label_mean_norm) +
                               " exceeds tolerance " + std::to_string(out.centering_tolerance));
    if (!base.is_mlp()) {
        const double alpha = expansion_rate(base.max_spectral_norm(), base.propagation()->lambda());
        if (alpha >= alpha_threshold(2))
            out.warnings.push_back("expansion rate alpha = " + std::to_string(alpha) +
                                   " is not below the regression threshold");
    }
    const std::size_t last = base.depth();
    const Matrix& w = base.weight(last);
    out.model.set_weight(last, Matrix(w.rows(), w.cols(), 0.0));
    return out;
}

MlpCounterexample mlp_counterexample(std::size_t n, std::size_t depth, std::size_t k_zero, std::uint64_t seed,
                                     std::shared_ptr<const PropagationMatrix> propagation) {
    require(n >= 1, "mlp_counterexample: n must be positive");
    require(k_zero < depth, "mlp_counterexample: zeroed layer must lie below the output layer");
    if (propagation) require(propagation->size() == n, "mlp_counterexample: propagation size does not match n");

    auto weights = unit_weights(depth);
    weights[k_zero] = Matrix(1, 1, 0.0);
    const Matrix signs = rademacher_column(n, seed, streams::kLabels);
    const bool mlp = propagation == nullptr;
    GnnModel model(std::move(weights), Activation(ActivationKind::identity), std::move(propagation));

    MlpCounterexample out{{std::move(model), signs, LabelSet::regression(signs)}, {}, k_zero};
    if (mlp) {
        out.expected_grads.assign(depth + 1, 0.0);
        out.expected_grads[k_zero] = -1.0;
    }
    return out;
}

Instance random_small_instance(const SmallInstanceParams& params) {
    require(params.n >= 3, "random_small_instance: n must be at least 3");
    require(params.width >= 1, "random_small_instance: width must be positive");
    std::vector<Edge> edges = ring_with_chords(params.n).edges();
    CounterRng edge_rng(params.seed, streams::kCsbmEdges);
    for (std::size_t i = 0; i < params.n; ++i)
        for (std::size_t j = i + 1; j < params.n; ++j)
            if (edge_rng.uniform() < params.extra_edge_prob) edges.emplace_back(i, j);
    auto propagation = std::make_shared<const PropagationMatrix>(build_propagation(Graph(params.n, std::move(edges))));

    CounterRng feature_rng(params.seed, streams::kFeatures);
    Matrix x0(params.n, params.width);
    for (double& v : x0.values()) v = feature_rng.normal();

    CounterRng label_rng(params.seed, streams::kLabels);
    LabelSet labels = LabelSet::regression(Matrix(params.n, 1));
    std::size_t out_dim = 0;
    if (params.task == TaskKind::regression) {
        out_dim = 2;
        Matrix y(params.n, out_dim);
        for (std::size_t i = 0; i < params.n; ++i) {
            for (double& v : y.row(i)) v = label_rng.normal();
            const double norm = euclidean_norm(y.row(i));
            const double radius = label_rng.uniform();
            if (norm > 0.0)
                for (double& v : y.row(i)) v *= radius / norm;
        }
        labels = LabelSet::regression(std::move(y));
    } else {
        out_dim = 3;
        std::vector<int> classes(params.n);
        for (int& c : classes) c = static_cast<int>(label_rng.next_u64() % out_dim);
        labels = LabelSet::classification(std::move(classes), static_cast<int>(out_dim));
    }

    InitConfig init;
    init.seed = params.seed;
    const auto dims = constant_width_dims(params.width, params.width, out_dim, params.depth);
    GnnModel model(init_weights(dims, init), Activation(params.activation), std::move(propagation));
    return {std::move(model), std::move(x0), std::move(labels)};
}

} // namespace smoothlab
