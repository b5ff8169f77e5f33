#include "smoothlab/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "smoothlab/backprop.hpp"
#include "smoothlab/bounds.hpp"
#include "smoothlab/constructions.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/rng.hpp"

namespace smoothlab {

TrainLog train(GnnModel& model, const Matrix& x0, const LabelSet& labels, const TrainConfig& config) {
    require(config.learning_rate >= 0.0 && std::isfinite(config.learning_rate),
            "train: learning rate must be finite and non-negative");
    TrainLog log;
    log.records.reserve(config.epochs + 1);
    for (std::size_t epoch = 0; epoch <= config.epochs; ++epoch) {
        const auto trace = forward(model, x0);
        const auto btrace = backward(model, trace, labels);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_value(labels, trace.output());
        rec.epsilon_n = epsilon_n(btrace.b.back());
        for (const auto& g : btrace.grads) rec.grad_norms.push_back(frobenius_norm(g));
        rec.spectral_norms = model.spectral_norms();
        const bool finite = std::isfinite(rec.loss) &&
                            std::all_of(rec.grad_norms.begin(), rec.grad_norms.end(),
                                        [](double g) { return std::isfinite(g); });
        if (!finite)
            throw TrainingDiverged(fmt::format("train: non-finite loss or gradient at epoch {} (learning rate {} "
                                               "is likely too high)",
                                               epoch, config.learning_rate));

        const bool snap = epoch == config.epochs ||
                          std::find(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch) !=
                              config.snapshot_epochs.end();
        if (snap) log.snapshots.push_back({epoch, profile(model, trace, btrace, labels)});
        log.records.push_back(std::move(rec));

        if (epoch == config.epochs) break;
        for (std::size_t k = 0; k <= model.depth(); ++k) {
            Matrix w = model.weight(k);
            w -= config.learning_rate * btrace.grads[k];
            model.set_weight(k, std::move(w));
        }
    }
    return log;
}

std::string format_train_log_csv(const TrainLog& log) {
    const std::size_t layers = log.records.empty() ? 0 : log.records.front().grad_norms.size();
    std::string out = "epoch,loss,epsilon_n";
    for (std::size_t k = 0; k < layers; ++k) out += fmt::format(",grad_norm_{}", k);
    for (std::size_t k = 0; k < layers; ++k) out += fmt::format(",s_{}", k);
    out += '\n';
    for (const auto& r : log.records) {
        out += fmt::format("{},{},{}", r.epoch, r.loss, r.epsilon_n);
        for (double g : r.grad_norms) out += fmt::format(",{}", g);
        for (double s : r.spectral_norms) out += fmt::format(",{}", s);
        out += '\n';
    }
    return out;
}

namespace {

std::string task_name(TaskKind t) { return t == TaskKind::regression ? "regression" : "classification"; }

TaskKind parse_task(const std::string& name) {
    if (name == "regression") return TaskKind::regression;
    if (name == "classification") return TaskKind::classification;
    throw ContractViolation("unknown task '" + name + "' (expected regression or classification)");
}

} // namespace

nlohmann::json ExperimentConfig::to_json() const {
    return {{"seed", seed},
            {"n", csbm.n},
            {"p_in", csbm.p_in},
            {"p_out", csbm.p_out},
            {"dim", csbm.dim},
            {"mu", csbm.mu},
            {"noise_std", csbm.noise_std},
            {"divisor_slack", divisor_slack},
            {"width", width},
            {"activation", std::string(smoothlab::to_string(activation))},
            {"init", std::string(smoothlab::to_string(init))},
            {"init_scale", init_scale},
            {"target_spectral_norm", target_spectral_norm},
            {"task", task_name(task)},
            {"normalize_by_labeled", normalize_by_labeled},
            {"learning_rate", learning_rate},
            {"epochs", epochs},
            {"shallow_depth", shallow_depth},
            {"deep_depth", deep_depth},
            {"depth", depth}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
    require(doc.is_object(), "config: expected a flat JSON object");
    ExperimentConfig c;
    const auto known = c.to_json();
    for (const auto& [key, value] : doc.items()) {
        require(known.contains(key), "config: unknown key '" + key + "'");
        require(value.is_primitive() && !value.is_null(), "config: key '" + key + "' must be a scalar");
    }
    auto get = [&](const char* key, auto& field) {
        if (!doc.contains(key)) return;
        try {
            doc.at(key).get_to(field);
        } catch (const nlohmann::json::exception&) {
            throw ContractViolation(std::string("config: key '") + key + "' has the wrong type");
        }
    };
    get("seed", c.seed);
    get("n", c.csbm.n);
    get("p_in", c.csbm.p_in);
    get("p_out", c.csbm.p_out);
    get("dim", c.csbm.dim);
    get("mu", c.csbm.mu);
    get("noise_std", c.csbm.noise_std);
    get("divisor_slack", c.divisor_slack);
    get("width", c.width);
    get("init_scale", c.init_scale);
    get("target_spectral_norm", c.target_spectral_norm);
    get("normalize_by_labeled", c.normalize_by_labeled);
    get("learning_rate", c.learning_rate);
    get("epochs", c.epochs);
    get("shallow_depth", c.shallow_depth);
    get("deep_depth", c.deep_depth);
    get("depth", c.depth);
    std::string name;
    if (doc.contains("activation")) {
        get("activation", name);
        c.activation = parse_activation(name);
    }
    if (doc.contains("init")) {
        get("init", name);
        c.init = parse_init_scheme(name);
    }
    if (doc.contains("task")) {
        get("task", name);
        c.task = parse_task(name);
    }
    return c;
}

ExperimentConfig fig1_preset() {
    ExperimentConfig c;
    c.activation = ActivationKind::tanh;
    c.init = InitScheme::orthogonal;
    c.target_spectral_norm = 1.5;
    c.learning_rate = 0.1;
    return c;
}

ExperimentData make_experiment_data(const ExperimentConfig& config) {
    ExperimentData data;
    data.sample = csbm_generate(config.csbm, config.seed);
    data.propagation =
        std::make_shared<const PropagationMatrix>(build_propagation(data.sample.graph, config.divisor_slack));
    data.x0 = data.sample.features;
    if (config.task == TaskKind::classification) {
        data.labels = LabelSet::classification(data.sample.labels, 2);
    } else {
        Matrix y(data.sample.labels.size(), 1);
        for (std::size_t i = 0; i < data.sample.labels.size(); ++i) y(i, 0) = data.sample.labels[i] == 0 ? -1.0 : 1.0;
        data.labels = LabelSet::regression(std::move(y));
    }
    data.labels.set_normalize_by_labeled(config.normalize_by_labeled);
    return data;
}

GnnModel make_model(const ExperimentConfig& config, const ExperimentData& data, std::size_t depth,
                    std::shared_ptr<const PropagationMatrix> propagation) {
    InitConfig init;
    init.scheme = config.init;
    init.std_scale = config.init_scale;
    if (config.target_spectral_norm > 0.0) init.target_spectral_norm = config.target_spectral_norm;
    init.seed = config.seed;
    const auto dims = constant_width_dims(data.x0.cols(), config.width, data.labels.output_dim(), depth);
    return GnnModel(init_weights(dims, init), Activation(config.activation), std::move(propagation));
}

Fig1Result experiment_fig1(const ExperimentConfig& config) {
    const auto data = make_experiment_data(config);
    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.learning_rate = config.learning_rate;
    tc.seed = config.seed;
    auto run = [&](std::size_t depth, std::shared_ptr<const PropagationMatrix> p) {
        GnnModel model = make_model(config, data, depth, std::move(p));
        return train(model, data.x0, data.labels, tc);
    };
    Fig1Result out;
    out.lambda = data.propagation->lambda();
    out.gnn_shallow = run(config.shallow_depth, data.propagation);
    out.gnn_deep = run(config.deep_depth, data.propagation);
    out.mlp_shallow = run(config.shallow_depth, nullptr);
    out.mlp_deep = run(config.deep_depth, nullptr);
    return out;
}

ProfileReport experiment_fig2(const ExperimentConfig& config) {
    const auto data = make_experiment_data(config);
    const GnnModel model = make_model(config, data, config.depth, data.propagation);
    return profile(model, data.x0, data.labels);
}

nlohmann::json experiment_bound_sweep(const SweepConfig& config) {
    require(!config.depths.empty() && !config.alphas.empty() && !config.qs.empty(),
            "experiment_bound_sweep: grid must be nonempty");
    ExperimentConfig base = config.base;
    base.task = TaskKind::classification;
    const auto data = make_experiment_data(base);
    const double lambda = data.propagation->lambda();
    const LabelSet regression_labels =
        LabelSet::regression(rademacher_column(data.x0.rows(), base.seed, streams::kLabels));

    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t depth : config.depths) {
        for (double alpha : config.alphas) {
            for (int q : config.qs) {
                nlohmann::json row{{"depth", depth}, {"alpha", alpha}, {"q", q}, {"lambda", lambda}};
                require(q == 1 || q == 2, "experiment_bound_sweep: q must be 1 or 2");
                if (alpha < 0.0 || alpha >= 1.0) {
                    row["skipped"] = "alpha outside [0, 1)";
                    rows.push_back(row);
                    continue;
                }
                const double s = alpha == 0.0 ? 1.0 : std::pow(lambda, -alpha);
                row["s"] = s;
                if (lambda * lambda * s >= 1.0 || lambda * s >= 1.0) {
                    row["skipped"] = "lambda * s >= 1";
                    rows.push_back(row);
                    continue;
                }
                const LabelSet& labels = q == 2 ? regression_labels : data.labels;
                ExperimentConfig mc = base;
                mc.target_spectral_norm = s;
                mc.activation = ActivationKind::centered_softplus;
                mc.init = InitScheme::gaussian;
                ExperimentData view{data.sample, data.propagation, data.x0, labels};
                const GnnModel model = make_model(mc, view, depth, data.propagation);

                const auto records = evaluate_instance_bounds(model, data.x0, labels, config.stationarity_constant);
                row["records"] = to_json(records);
                bool all_ok = true;
                for (const auto& r : records)
                    if (r.theorem != "global-stationarity" && r.theorem != "backward-rate" && r.satisfied)
                        all_ok = all_ok && *r.satisfied;
                row["smoothing_bounds_satisfied"] = all_ok;

                const auto rep = profile(model, data.x0, labels);
                row["middle_backward_energy"] = rep.backward_energy[depth / 2];

                if (q == 2) {
                    const auto point = spurious_stationary_gnn(model, labels);
                    const auto trace = forward(point.model, data.x0);
                    const auto btrace = backward(point.model, trace, labels);
                    double max_grad = 0.0;
                    for (const auto& g : btrace.grads) max_grad = std::max(max_grad, frobenius_norm(g));
                    const double eps = epsilon_n(btrace.b.back());
                    const auto b = BoundInputs::from_instance(point.model, data.x0, labels);
                    nlohmann::json cor{{"max_grad_norm", max_grad},
                                       {"epsilon_n", eps},
                                       {"loss", loss_value(labels, trace.output())},
                                       {"warnings", point.warnings}};
                    if (xi(b.alpha, 2) > 0.0)
                        cor["bound"] = global_stationarity_bound(b, eps, config.stationarity_constant);
                    else
                        cor["bound"] = nullptr;
                    row["stationary_point"] = cor;
                }
                rows.push_back(row);
            }
        }
    }
    return {{"config", base.to_json()},
            {"stationarity_constant", config.stationarity_constant},
            {"lambda", lambda},
            {"rows", rows}};
}

} // namespace smoothlab
