#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothlab/graph.hpp"
#include "smoothlab/loss.hpp"
#include "smoothlab/metrics.hpp"
#include "smoothlab/model.hpp"

namespace smoothlab {

struct TrainConfig {
    std::size_t epochs = 300;
    double learning_rate = 0.05;
    /// The final epoch is always snapshotted as well.
    std::vector<std::size_t> snapshot_epochs{0, 1, 5, 10, 50};
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double epsilon_n = 0.0;
    std::vector<double> grad_norms;
    std::vector<double> spectral_norms;
};

struct Snapshot {
    std::size_t epoch = 0;
    ProfileReport report;
};

/// Records for epochs 0..epochs; record e is taken before the e-th update,
/// so the last one describes the trained model.
struct TrainLog {
    std::vector<EpochRecord> records;
    std::vector<Snapshot> snapshots;

    const EpochRecord& first() const { return records.front(); }
    const EpochRecord& last() const { return records.back(); }
};

/// Full-batch gradient descent W^(k) ← W^(k) − lr ∂L/∂W^(k) on every layer.
/// Throws TrainingDiverged as soon as the loss or a gradient is not finite.
TrainLog train(GnnModel& model, const Matrix& x0, const LabelSet& labels, const TrainConfig& config);

/// Columns: epoch,loss,epsilon_n,grad_norm_0..grad_norm_L,s_0..s_L.
std::string format_train_log_csv(const TrainLog& log);

/// Shared settings for the canned experiments. Serialized as flat JSON.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    CsbmParams csbm;
    double divisor_slack = 1.0;
    std::size_t width = 16;
    ActivationKind activation = ActivationKind::centered_softplus;
    InitScheme init = InitScheme::gaussian;
    double init_scale = 1.0;
    /// Rescales every W^(k) to this spectral norm; <= 0 disables rescaling.
    double target_spectral_norm = 1.0;
    TaskKind task = TaskKind::classification;
    /// Loss normalizer 1/n_labeled instead of 1/n; only matters with masked labels.
    bool normalize_by_labeled = false;
    double learning_rate = 0.05;
    std::size_t epochs = 300;
    std::size_t shallow_depth = 5;
    std::size_t deep_depth = 40;
    /// Depth for single-model runs (train, profile).
    std::size_t depth = 40;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static ExperimentConfig from_json(const nlohmann::json& doc);
};

/// CSBM sample, its propagation matrix and the matching features and labels.
struct ExperimentData {
    CsbmSample sample;
    std::shared_ptr<const PropagationMatrix> propagation;
    Matrix x0;
    LabelSet labels;
};

/// Frozen settings for experiment_fig1: tanh, orthogonal init rescaled to
/// s_k = 1.5, lr 0.1.
ExperimentConfig fig1_preset();

ExperimentData make_experiment_data(const ExperimentConfig& config);

/// Freshly initialized model of the given depth; null propagation builds the MLP twin.
GnnModel make_model(const ExperimentConfig& config, const ExperimentData& data, std::size_t depth,
                    std::shared_ptr<const PropagationMatrix> propagation);

struct Fig1Result {
    double lambda = 0.0;
    TrainLog gnn_shallow;
    TrainLog gnn_deep;
    TrainLog mlp_shallow;
    TrainLog mlp_deep;
};

/// GNN and MLP at shallow and deep depth on identical data, init seed, lr and epochs.
Fig1Result experiment_fig1(const ExperimentConfig& config);

/// Profile of a freshly initialized GNN of depth `config.depth`.
ProfileReport experiment_fig2(const ExperimentConfig& config);

struct SweepConfig {
    ExperimentConfig base;
    std::vector<std::size_t> depths{5, 10, 20, 40};
    std::vector<double> alphas{0.0, 0.1, 0.2};
    std::vector<int> qs{1, 2};
    /// Hidden constant used for the global stationarity bound.
    double stationarity_constant = 1.0;
};

/// One row per (depth, alpha, q): instance bounds, the middle-layer backward
/// energy and, for q = 2, the zeroed-output stationary point.
nlohmann::json experiment_bound_sweep(const SweepConfig& config);

} // namespace smoothlab
