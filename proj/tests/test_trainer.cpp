#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "smoothlab/backprop.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/trainer.hpp"
#include "test_support.hpp"

using namespace smoothlab;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.csbm.n = 80;
    c.csbm.p_in = 0.3;
    c.csbm.p_out = 0.06;
    c.width = 6;
    c.depth = 4;
    c.epochs = 20;
    return c;
}

} // namespace

TEST_CASE("single linear layer descends monotonically") {
    const std::size_t n = 20;
    auto prop = std::make_shared<const PropagationMatrix>(build_propagation(ring_with_chords(n)));
    const auto x0 = testing::random_matrix(n, 3, 1);
    const auto labels = LabelSet::regression(testing::random_matrix(n, 1, 2, 0.3));
    GnnModel model({testing::random_matrix(3, 1, 3)}, Activation(ActivationKind::identity), prop);

    // Curvature of the quadratic is the top eigenvalue of FᵀF/n.
    const auto f = matmul(prop->matrix(), x0);
    const double curvature = std::pow(spectral_norm(f), 2) / static_cast<double>(n);
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.learning_rate = 1.0 / curvature;
    const auto log = train(model, x0, labels, cfg);
    REQUIRE(log.records.size() == 101);
    for (std::size_t e = 1; e < log.records.size(); ++e)
        CHECK(log.records[e].loss <= log.records[e - 1].loss * (1 + 1e-14));
    CHECK(log.last().loss < log.first().loss);
}

TEST_CASE("zero learning rate leaves the model untouched") {
    const auto cfg = small_config();
    const auto data = make_experiment_data(cfg);
    GnnModel model = make_model(cfg, data, 3, data.propagation);
    const auto before = model.weights();
    TrainConfig tc;
    tc.epochs = 5;
    tc.learning_rate = 0.0;
    const auto log = train(model, data.x0, data.labels, tc);
    CHECK(model.weights() == before);
    for (const auto& r : log.records) {
        CHECK(r.loss == log.first().loss);
        CHECK(r.grad_norms == log.first().grad_norms);
    }
    tc.learning_rate = -0.1;
    CHECK_THROWS_AS(train(model, data.x0, data.labels, tc), ContractViolation);
}

TEST_CASE("logged gradients are the ones used for the update") {
    const auto cfg = small_config();
    const auto data = make_experiment_data(cfg);
    GnnModel model = make_model(cfg, data, 3, data.propagation);
    const auto bt = backward(model, forward(model, data.x0), data.labels);
    GnnModel copy = model;
    TrainConfig tc;
    tc.epochs = 1;
    tc.learning_rate = 0.1;
    const auto log = train(copy, data.x0, data.labels, tc);
    for (std::size_t k = 0; k <= 3; ++k) {
        CHECK(log.first().grad_norms[k] == frobenius_norm(bt.grads[k]));
        CHECK(copy.weight(k) == model.weight(k) - 0.1 * bt.grads[k]);
    }
}

TEST_CASE("snapshots and CSV layout") {
    const auto cfg = small_config();
    const auto data = make_experiment_data(cfg);
    GnnModel model = make_model(cfg, data, 2, data.propagation);
    TrainConfig tc;
    tc.epochs = 7;
    const auto log = train(model, data.x0, data.labels, tc);
    std::vector<std::size_t> epochs;
    for (const auto& s : log.snapshots) epochs.push_back(s.epoch);
    CHECK(epochs == std::vector<std::size_t>{0, 1, 5, 7});
    const auto csv = format_train_log_csv(log);
    CHECK(csv.rfind("epoch,loss,epsilon_n,grad_norm_0,grad_norm_1,grad_norm_2,s_0,s_1,s_2\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
}

TEST_CASE("divergence is reported") {
    auto cfg = small_config();
    cfg.task = TaskKind::regression;
    cfg.target_spectral_norm = 3.0;
    const auto data = make_experiment_data(cfg);
    GnnModel model = make_model(cfg, data, 2, data.propagation);
    TrainConfig tc;
    tc.epochs = 200;
    tc.learning_rate = 1e6;
    CHECK_THROWS_AS(train(model, data.x0, data.labels, tc), TrainingDiverged);
}

TEST_CASE("training is deterministic") {
    const auto cfg = small_config();
    auto run_once = [&] {
        const auto data = make_experiment_data(cfg);
        GnnModel model = make_model(cfg, data, cfg.depth, data.propagation);
        TrainConfig tc;
        tc.epochs = cfg.epochs;
        tc.learning_rate = cfg.learning_rate;
        return format_train_log_csv(train(model, data.x0, data.labels, tc));
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("config JSON") {
    auto cfg = fig1_preset();
    cfg.seed = 42;
    cfg.csbm.n = 120;
    cfg.task = TaskKind::regression;
    cfg.normalize_by_labeled = true;
    const auto back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.activation == ActivationKind::tanh);
    CHECK(back.init == InitScheme::orthogonal);
    CHECK(ExperimentConfig::from_json(nlohmann::json::object()).to_json() == ExperimentConfig{}.to_json());
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"widht", 3}}), ContractViolation);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"width", "three"}}), ContractViolation);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"task", "ranking"}}), ContractViolation);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::array()), ContractViolation);
}

TEST_CASE("MLP twin shares the GNN's initial weights") {
    const auto cfg = small_config();
    const auto data = make_experiment_data(cfg);
    const auto gnn = make_model(cfg, data, 5, data.propagation);
    const auto mlp = make_model(cfg, data, 5, nullptr);
    CHECK(mlp.is_mlp());
    CHECK(gnn.weights() == mlp.weights());
}

TEST_CASE("deep GNN gradients collapse early while the loss stays high") {
    // Frozen GNN/MLP comparison preset; only the first 50 epochs matter here.
    auto cfg = fig1_preset();
    const auto data = make_experiment_data(cfg);
    GnnModel model = make_model(cfg, data, cfg.deep_depth, data.propagation);
    TrainConfig tc;
    tc.epochs = 50;
    tc.learning_rate = cfg.learning_rate;
    const auto log = train(model, data.x0, data.labels, tc);
    const auto& first = log.first();
    const auto& at50 = log.last();
    for (std::size_t k = 0; k < first.grad_norms.size(); ++k)
        CHECK(at50.grad_norms[k] < 0.01 * first.grad_norms[k]);
    CHECK(at50.loss > 0.5 * first.loss);
}

TEST_CASE("init profile has its backward minimum in the middle") {
    ExperimentConfig cfg;
    cfg.depth = 40;
    const auto rep = experiment_fig2(cfg);
    REQUIRE(rep.backward_energy.size() == 41);
    CHECK(rep.backward_energy[20] <= 0.1 * std::max(rep.backward_energy[2], rep.backward_energy[38]));
    REQUIRE(rep.forward_rate.has_value());
}

TEST_CASE("identity activation gives a one-sided backward profile") {
    ExperimentConfig cfg;
    cfg.depth = 20;
    cfg.activation = ActivationKind::identity;
    const auto rep = experiment_fig2(cfg);
    for (std::size_t k = 1; k <= 20; ++k) CHECK(rep.backward_energy[k - 1] <= rep.backward_energy[k] * (1 + 1e-9));
}

TEST_CASE("bound sweep") {
    SweepConfig sweep;
    sweep.base = small_config();
    sweep.depths = {5, 10, 20};
    sweep.alphas = {0.0, 0.1, 1.5};
    const auto out = experiment_bound_sweep(sweep);
    CHECK(out["rows"].size() == 18);
    double prev_middle = 1e300;
    double prev_grad = 1e300;
    for (const auto& row : out["rows"]) {
        if (row["alpha"] == 1.5) {
            CHECK(row.contains("skipped"));
            continue;
        }
        CHECK(row["smoothing_bounds_satisfied"] == true);
        if (row["alpha"] == 0.0 && row["q"] == 1) {
            const double middle = row["middle_backward_energy"];
            CHECK(middle < prev_middle);
            prev_middle = middle;
        }
        if (row["alpha"] == 0.0 && row["q"] == 2) {
            const double g = row["stationary_point"]["max_grad_norm"];
            CHECK(g < prev_grad);
            prev_grad = g;
        }
    }
    SweepConfig empty;
    empty.depths.clear();
    CHECK_THROWS_AS(experiment_bound_sweep(empty), ContractViolation);
}
