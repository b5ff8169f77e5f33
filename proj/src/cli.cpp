#include "smoothlab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "smoothlab/backprop.hpp"
#include "smoothlab/bounds.hpp"
#include "smoothlab/constructions.hpp"
#include "smoothlab/digest.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/metrics.hpp"
#include "smoothlab/rng.hpp"
#include "smoothlab/trainer.hpp"

namespace smoothlab::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractViolation("cannot write " + path.string());
    out << text;
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::string format_features_csv(const Matrix& x) {
    std::string out = "node_id";
    for (std::size_t j = 0; j < x.cols(); ++j) out += fmt::format(",x_{}", j);
    out += '\n';
    for (std::size_t i = 0; i < x.rows(); ++i) {
        out += fmt::format("{}", i);
        for (double v : x.row(i)) out += fmt::format(",{}", v);
        out += '\n';
    }
    return out;
}

Matrix parse_features_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("node_id", 0) != 0)
        throw ParseError("features: missing 'node_id,x_0,...' header");
    const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (cols == 0) throw ParseError("features: header lists no feature columns");
    std::vector<std::vector<double>> rows;
    std::vector<bool> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> fields;
        std::size_t start = 0;
        while (start <= line.size()) {
            const std::size_t end = std::min(line.find(',', start), line.size());
            double v = 0.0;
            const auto* first = line.data() + start;
            const auto* last = line.data() + end;
            const auto res = std::from_chars(first, last, v);
            if (res.ec != std::errc() || res.ptr != last)
                throw ParseError("features: line " + std::to_string(line_no) + ": bad number");
            fields.push_back(v);
            start = end + 1;
        }
        if (fields.size() != cols + 1)
            throw ParseError("features: line " + std::to_string(line_no) + ": expected " +
                             std::to_string(cols + 1) + " fields");
        const double id = fields.front();
        if (id < 0 || id != std::floor(id)) throw ParseError("features: line " + std::to_string(line_no) + ": bad id");
        const auto idx = static_cast<std::size_t>(id);
        if (idx >= rows.size()) {
            rows.resize(idx + 1);
            seen.resize(idx + 1, false);
        }
        if (seen[idx]) throw ParseError("features: duplicate node id " + std::to_string(idx));
        seen[idx] = true;
        rows[idx].assign(fields.begin() + 1, fields.end());
    }
    if (rows.empty() || !std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
        throw ParseError("features: node ids must cover 0..n-1");
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Matrix::from_data(rows.size(), cols, std::move(flat));
}

TaskKind parse_task_flag(const std::string& name) {
    if (name == "regression") return TaskKind::regression;
    if (name == "classification") return TaskKind::classification;
    throw UsageError("--task: unknown task '" + name + "'");
}

// Experiment flags shared by gen, train, profile and bounds. Each flag
// overrides the matching key of the --config file when given.
struct ExperimentFlags {
    std::string config_path;
    std::string graph_path;
    std::string features_path;
    std::string labels_path;
    ExperimentConfig values;
    std::string activation;
    std::string init;
    std::string task;
    std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> setters;

    template <class T>
    void add(CLI::App* app, const std::string& name, T& slot, const std::string& help,
             std::function<void(ExperimentConfig&, const T&)> apply) {
        CLI::Option* opt = app->add_option(name, slot, help);
        setters.emplace_back(opt, [&slot, apply](ExperimentConfig& c) { apply(c, slot); });
    }

    void attach(CLI::App* app, bool data_only = false) {
        app->add_option("--config", config_path, "Flat JSON config; flags override its keys");
        add<std::uint64_t>(app, "--seed", values.seed, "Seed", [](auto& c, auto& v) { c.seed = v; });
        add<std::size_t>(app, "--n", values.csbm.n, "CSBM node count", [](auto& c, auto& v) { c.csbm.n = v; });
        add<double>(app, "--p-in", values.csbm.p_in, "CSBM intra-class edge probability",
                    [](auto& c, auto& v) { c.csbm.p_in = v; });
        add<double>(app, "--p-out", values.csbm.p_out, "CSBM inter-class edge probability",
                    [](auto& c, auto& v) { c.csbm.p_out = v; });
        add<std::size_t>(app, "--dim", values.csbm.dim, "CSBM feature dimension",
                         [](auto& c, auto& v) { c.csbm.dim = v; });
        add<double>(app, "--mu", values.csbm.mu, "CSBM class mean separation", [](auto& c, auto& v) { c.csbm.mu = v; });
        add<double>(app, "--noise-std", values.csbm.noise_std, "CSBM feature noise",
                    [](auto& c, auto& v) { c.csbm.noise_std = v; });
        add<std::string>(app, "--task", task, "regression|classification",
                         [](auto& c, auto& v) { c.task = parse_task_flag(v); });
        if (data_only) return;
        add<double>(app, "--slack", values.divisor_slack, "Propagation divisor slack",
                    [](auto& c, auto& v) { c.divisor_slack = v; });
        add<std::size_t>(app, "--width", values.width, "Hidden width", [](auto& c, auto& v) { c.width = v; });
        add<std::size_t>(app, "--depth", values.depth, "Depth L", [](auto& c, auto& v) { c.depth = v; });
        add<std::string>(app, "--activation", activation, "identity|centered-softplus|tanh|relu|softplus",
                         [](auto& c, auto& v) { c.activation = parse_activation(v); });
        add<std::string>(app, "--init", init, "gaussian|orthogonal",
                         [](auto& c, auto& v) { c.init = parse_init_scheme(v); });
        add<double>(app, "--init-scale", values.init_scale, "Init scale",
                    [](auto& c, auto& v) { c.init_scale = v; });
        add<double>(app, "--target-s", values.target_spectral_norm, "Per-layer spectral norm at init (<= 0: off)",
                    [](auto& c, auto& v) { c.target_spectral_norm = v; });
        CLI::Option* normalize = app->add_flag("--normalize-by-labeled", values.normalize_by_labeled,
                                               "Divide the loss by the labeled node count instead of n");
        setters.emplace_back(normalize, [this](ExperimentConfig& c) { c.normalize_by_labeled = values.normalize_by_labeled; });
        add<double>(app, "--lr", values.learning_rate, "Learning rate",
                    [](auto& c, auto& v) { c.learning_rate = v; });
        add<std::size_t>(app, "--epochs", values.epochs, "Epochs", [](auto& c, auto& v) { c.epochs = v; });
        add<std::size_t>(app, "--shallow-depth", values.shallow_depth, "Shallow depth for fig1",
                         [](auto& c, auto& v) { c.shallow_depth = v; });
        add<std::size_t>(app, "--deep-depth", values.deep_depth, "Deep depth for fig1",
                         [](auto& c, auto& v) { c.deep_depth = v; });
        app->add_option("--graph", graph_path, "Edge list; replaces the CSBM graph");
        app->add_option("--features", features_path, "Features CSV for --graph");
        app->add_option("--labels", labels_path, "Labels CSV for --graph");
    }

    ExperimentConfig resolve(ExperimentConfig config = {}) const {
        if (!config_path.empty()) {
            if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);
            json doc;
            try {
                doc = json::parse(read_text(config_path));
            } catch (const json::exception& e) {
                throw ParseError("config " + config_path + ": " + e.what());
            }
            config = ExperimentConfig::from_json(doc);
        }
        for (const auto& [opt, apply] : setters)
            if (opt->count() > 0) apply(config);
        return config;
    }

    bool external() const { return !graph_path.empty(); }

    ExperimentData data(const ExperimentConfig& config) const {
        if (!external()) {
            if (!features_path.empty() || !labels_path.empty())
                throw UsageError("--features and --labels need --graph");
            return make_experiment_data(config);
        }
        if (features_path.empty() || labels_path.empty())
            throw UsageError("--graph needs --features and --labels");
        ExperimentData d;
        d.sample.graph = read_edge_list(graph_path);
        d.propagation =
            std::make_shared<const PropagationMatrix>(build_propagation(d.sample.graph, config.divisor_slack));
        d.x0 = parse_features_csv(read_text(features_path));
        d.labels = read_labels_csv(labels_path, config.task);
        d.labels.set_normalize_by_labeled(config.normalize_by_labeled);
        require(d.x0.rows() == d.sample.graph.node_count(), "features: row count does not match the graph");
        require(d.labels.node_count() == d.sample.graph.node_count(), "labels: row count does not match the graph");
        return d;
    }

    // Hash of everything a run depends on besides the config.
    std::string input_hash() const {
        if (!external()) return "csbm";
        return sha256_hex(read_text(graph_path) + "\n" + read_text(features_path) + "\n" + read_text(labels_path));
    }
};

void check_format(const std::string& format) {
    if (format != "json" && format != "csv") throw UsageError("--format must be json or csv");
}

void add_format(CLI::App* app, std::string& format) {
    app->add_option("--format", format, "json|csv")->check(CLI::IsMember({"json", "csv"}));
}

// ---- gen --------------------------------------------------------------------

int cmd_gen(const ExperimentFlags& flags, const std::string& out_dir, std::ostream& out) {
    ExperimentConfig config = flags.resolve();
    const auto data = make_experiment_data(config);
    const fs::path dir(out_dir);
    write_text(dir / "graph.edges", format_edge_list(data.sample.graph));
    write_text(dir / "features.csv", format_features_csv(data.x0));
    write_text(dir / "labels.csv", format_labels_csv(data.labels));
    json summary{{"nodes", data.sample.graph.node_count()},
                 {"edges", data.sample.graph.edge_count()},
                 {"generated_nodes", config.csbm.n},
                 {"lambda", data.propagation->lambda()},
                 {"config", config.to_json()}};
    write_text(dir / "meta.json", dump(summary));
    out << dump(summary);
    return kExitOk;
}

// ---- train ------------------------------------------------------------------

std::string run_hash(const std::string& kind, const ExperimentConfig& config, const std::string& inputs) {
    return sha256_hex(kind + "\n" + config.to_json().dump() + "\n" + inputs).substr(0, 16);
}

void write_run(const fs::path& dir, const TrainLog& log) {
    write_text(dir / "log.csv", format_train_log_csv(log));
    for (const auto& snap : log.snapshots)
        write_text(dir / "profiles" / fmt::format("epoch_{:05}.csv", snap.epoch), format_profile_csv(snap.report));
}

json bounds_or_reason(const GnnModel& model, const Matrix& x0, const LabelSet& labels) {
    try {
        return to_json(evaluate_instance_bounds(model, x0, labels));
    } catch (const ContractViolation& e) {
        return json{{"skipped", e.what()}};
    }
}

int cmd_train(const ExperimentFlags& flags, const std::string& out_root, const std::string& experiment,
              const std::string& format, std::ostream& out) {
    check_format(format);
    const std::string kind = experiment.empty() ? "train" : experiment;
    const ExperimentConfig config = flags.resolve(kind == "fig1" ? fig1_preset() : ExperimentConfig{});
    if (kind != "train" && kind != "fig1") throw UsageError("--experiment must be fig1");
    if (kind == "fig1" && flags.external()) throw UsageError("--experiment fig1 runs on CSBM data");
    const fs::path dir = fs::path(out_root) / run_hash(kind, config, flags.input_hash());
    fs::create_directories(dir);
    write_text(dir / "config.json", dump(config.to_json()));

    json summary{{"run_dir", dir.string()}, {"experiment", kind}};
    std::string csv = "run,depth,mode,initial_loss,final_loss\n";
    if (kind == "fig1") {
        const Fig1Result res = experiment_fig1(config);
        const std::vector<std::tuple<std::string, std::size_t, std::string, const TrainLog*>> runs{
            {"gnn_shallow", config.shallow_depth, "gnn", &res.gnn_shallow},
            {"gnn_deep", config.deep_depth, "gnn", &res.gnn_deep},
            {"mlp_shallow", config.shallow_depth, "mlp", &res.mlp_shallow},
            {"mlp_deep", config.deep_depth, "mlp", &res.mlp_deep}};
        json list = json::array();
        for (const auto& [name, depth, mode, log] : runs) {
            write_run(dir / name, *log);
            list.push_back({{"run", name},
                            {"depth", depth},
                            {"mode", mode},
                            {"initial_loss", log->first().loss},
                            {"final_loss", log->last().loss}});
            csv += fmt::format("{},{},{},{},{}\n", name, depth, mode, log->first().loss, log->last().loss);
        }
        summary["lambda"] = res.lambda;
        summary["runs"] = list;
    } else {
        const auto data = flags.data(config);
        GnnModel model = make_model(config, data, config.depth, data.propagation);
        TrainConfig tc;
        tc.epochs = config.epochs;
        tc.learning_rate = config.learning_rate;
        tc.seed = config.seed;
        const TrainLog log = train(model, data.x0, data.labels, tc);
        write_run(dir, log);
        write_text(dir / "bounds.json", dump(bounds_or_reason(model, data.x0, data.labels)));
        save_checkpoint(model, {config.seed}, dir / "model.ckpt");
        summary["lambda"] = data.propagation->lambda();
        summary["initial_loss"] = log.first().loss;
        summary["final_loss"] = log.last().loss;
        csv += fmt::format("train,{},gnn,{},{}\n", config.depth, log.first().loss, log.last().loss);
    }
    json meta{{"experiment", kind}, {"config_hash", sha256_hex(config.to_json().dump())},
              {"inputs_hash", flags.input_hash()}, {"seed", config.seed}};
    write_text(dir / "meta.json", dump(meta));
    out << (format == "json" ? dump(summary) : csv);
    return kExitOk;
}

// ---- profile ----------------------------------------------------------------

GnnModel model_for(const ExperimentConfig& config, const ExperimentData& data, const std::string& checkpoint) {
    if (checkpoint.empty()) return make_model(config, data, config.depth, data.propagation);
    return load_checkpoint(checkpoint, data.propagation);
}

int cmd_profile(const ExperimentFlags& flags, const std::string& checkpoint, const std::string& format,
                const std::string& out_path, std::ostream& out) {
    check_format(format);
    const ExperimentConfig config = flags.resolve();
    const auto data = flags.data(config);
    const GnnModel model = model_for(config, data, checkpoint);
    const ProfileReport report = profile(model, data.x0, data.labels);
    const std::string text = format == "json" ? format_profile_json(report) : format_profile_csv(report);
    if (out_path.empty())
        out << text;
    else
        write_text(out_path, text);
    return kExitOk;
}

// ---- bounds -----------------------------------------------------------------

struct BoundsFlags {
    std::string checkpoint;
    bool sweep = false;
    std::vector<std::size_t> depths{5, 10, 20, 40};
    std::vector<double> alphas{0.0, 0.1, 0.2};
    std::vector<int> qs{1, 2};
    double c = 1.0;
    Thm41Params thm41;
    std::string thm41_case = "lower-bounded-output";
};

std::string records_csv(const std::vector<BoundRecord>& records) {
    std::string csv = "theorem,index,bound,measured,satisfied\n";
    for (const auto& r : records) {
        std::string index = r.inputs.contains("k") ? r.inputs["k"].dump() : r.inputs.value("depth", json(0)).dump();
        csv += fmt::format("{},{},{},{},{}\n", r.theorem, index, r.bound ? fmt::format("{}", *r.bound) : "",
                           r.measured, r.satisfied ? (*r.satisfied ? "true" : "false") : "");
    }
    return csv;
}

int cmd_bounds(const ExperimentFlags& flags, const BoundsFlags& bf, const std::string& format, std::ostream& out) {
    check_format(format);
    const ExperimentConfig config = flags.resolve();
    if (bf.sweep) {
        if (flags.external()) throw UsageError("--sweep runs on CSBM data");
        SweepConfig sc;
        sc.base = config;
        sc.depths = bf.depths;
        sc.alphas = bf.alphas;
        sc.qs = bf.qs;
        sc.stationarity_constant = bf.c;
        const json table = experiment_bound_sweep(sc);
        if (format == "json") {
            out << dump(table);
        } else {
            std::string csv = "depth,alpha,q,s,smoothing_bounds_satisfied,middle_backward_energy,"
                              "stationary_max_grad,stationary_bound,skipped\n";
            for (const auto& row : table["rows"]) {
                const bool skipped = row.contains("skipped");
                const bool sp = row.contains("stationary_point");
                csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", row["depth"].dump(), row["alpha"].dump(),
                                   row["q"].dump(), skipped ? "" : row["s"].dump(),
                                   skipped ? "" : row["smoothing_bounds_satisfied"].dump(),
                                   skipped ? "" : row["middle_backward_energy"].dump(),
                                   sp ? row["stationary_point"]["max_grad_norm"].dump() : "",
                                   sp ? row["stationary_point"]["bound"].dump() : "",
                                   skipped ? row["skipped"].get<std::string>() : "");
            }
            out << csv;
        }
        return kExitOk;
    }
    const auto data = flags.data(config);
    const GnnModel model = model_for(config, data, bf.checkpoint);
    const auto records = evaluate_instance_bounds(model, data.x0, data.labels, bf.c);
    if (format == "csv") {
        out << records_csv(records);
        return kExitOk;
    }
    const BoundInputs inputs = BoundInputs::from_instance(model, data.x0, data.labels);
    json doc{{"inputs", inputs.to_json()},
             {"records", to_json(records)},
             {"condition_report", thm41_condition_report(inputs, bf.thm41, parse_thm41_case(bf.thm41_case)).to_json()}};
    out << dump(doc);
    return kExitOk;
}

// ---- counterexample ---------------------------------------------------------

struct CounterexampleFlags {
    std::size_t n = 50;
    std::size_t depth = 20;
    std::vector<std::size_t> depths{5, 10, 20, 40};
    std::size_t k_zero = 0;
    std::size_t width = 16;
    std::uint64_t seed = 0;
    std::string graph = "ring";
    double c = 1.0;
    double tol = 1e-12;
};

std::shared_ptr<const PropagationMatrix> counterexample_graph(const CounterexampleFlags& f, bool allow_none) {
    if (f.graph == "none") {
        if (!allow_none) throw UsageError("--graph none is only valid for prop42");
        return nullptr;
    }
    if (f.graph == "ring") return std::make_shared<const PropagationMatrix>(build_propagation(ring_with_chords(f.n)));
    if (f.graph == "csbm") {
        CsbmParams p;
        p.n = f.n;
        return std::make_shared<const PropagationMatrix>(build_propagation(csbm_generate(p, f.seed).graph));
    }
    throw UsageError("--graph must be ring, csbm or none");
}

int cmd_prop32(const CounterexampleFlags& f, const std::string& format, std::ostream& out) {
    auto propagation = counterexample_graph(f, false);
    const Instance inst = constant_gradient_gnn(propagation->size(), f.depth, propagation);
    const ProfileReport rep = profile(inst.model, inst.x0, inst.labels);
    json layers = json::array();
    std::string csv = "k,claimed_grad_norm,grad_norm,claimed_backward_energy,backward_energy\n";
    double worst_grad = 0.0;
    double worst_energy = 0.0;
    for (std::size_t k = 0; k < rep.grad_norms.size(); ++k) {
        layers.push_back({{"k", k}, {"grad_norm", rep.grad_norms[k]}, {"backward_energy", rep.backward_energy[k]},
                          {"forward_energy", rep.forward_energy[k]}});
        csv += fmt::format("{},1,{},0,{}\n", k, rep.grad_norms[k], rep.backward_energy[k]);
        worst_grad = std::max(worst_grad, std::abs(rep.grad_norms[k] - 1.0));
        worst_energy = std::max(worst_energy, rep.backward_energy[k]);
    }
    json doc{{"construction", "prop32"},
             {"n", propagation->size()},
             {"depth", f.depth},
             {"graph", f.graph},
             {"lambda", propagation->lambda()},
             {"claimed", {{"grad_norm", 1.0}, {"backward_energy", 0.0}}},
             {"layers", layers},
             {"max_grad_norm_deviation", worst_grad},
             {"max_backward_energy", worst_energy},
             {"tolerance", f.tol},
             {"holds", worst_grad <= f.tol && worst_energy <= f.tol}};
    out << (format == "json" ? dump(doc) : csv);
    return kExitOk;
}

int cmd_cor42(const CounterexampleFlags& f, const std::string& format, std::ostream& out) {
    ExperimentConfig config;
    config.seed = f.seed;
    config.csbm.n = f.n;
    config.width = f.width;
    config.activation = ActivationKind::centered_softplus;
    config.init = InitScheme::gaussian;
    config.target_spectral_norm = 1.0;
    const auto data = make_experiment_data(config);
    const std::size_t n = data.x0.rows();
    const LabelSet labels = LabelSet::regression(rademacher_column(n, f.seed, streams::kLabels));
    double half_mean_sq = 0.0;
    for (double y : labels.targets().values()) half_mean_sq += y * y;
    half_mean_sq /= 2.0 * static_cast<double>(n);

    ExperimentData view{data.sample, data.propagation, data.x0, labels};
    json rows = json::array();
    std::string csv = "depth,loss,claimed_loss,last_layer_grad,max_grad_norm,epsilon_n,bound\n";
    std::vector<double> maxima;
    for (std::size_t depth : f.depths) {
        const auto point = spurious_stationary_gnn(make_model(config, view, depth, data.propagation), labels);
        const auto trace = forward(point.model, data.x0);
        const auto btrace = backward(point.model, trace, labels);
        std::vector<double> grads;
        for (const auto& g : btrace.grads) grads.push_back(frobenius_norm(g));
        const double max_grad = *std::max_element(grads.begin(), grads.end());
        maxima.push_back(max_grad);
        // With H^(L) = 0 the output signal is -Y/n, so the last gradient is F^(L)ᵀ(-Y/n).
        Matrix closed = matmul_tn(trace.f.back(), labels.targets());
        closed *= -1.0 / static_cast<double>(n);
        const double eps = epsilon_n(btrace.b.back());
        const auto inputs = BoundInputs::from_instance(point.model, data.x0, labels);
        const double bound = global_stationarity_bound(inputs, eps, f.c);
        const double loss = loss_value(labels, trace.output());
        rows.push_back({{"depth", depth},
                        {"loss", loss},
                        {"claimed_loss", half_mean_sq},
                        {"last_layer_grad_norm", grads.back()},
                        {"claimed_last_layer_grad_norm", 0.0},
                        {"last_layer_closed_form_norm", frobenius_norm(closed)},
                        {"grad_norms", grads},
                        {"max_grad_norm", max_grad},
                        {"epsilon_n", eps},
                        {"bound", bound},
                        {"warnings", point.warnings}});
        csv += fmt::format("{},{},{},{},{},{},{}\n", depth, loss, half_mean_sq, grads.back(), max_grad, eps, bound);
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < maxima.size(); ++i) decreasing = decreasing && maxima[i] < maxima[i - 1];
    json doc{{"construction", "cor42"},
             {"n", n},
             {"seed", f.seed},
             {"lambda", data.propagation->lambda()},
             {"c", f.c},
             {"rows", rows},
             {"max_grad_strictly_decreasing", decreasing}};
    out << (format == "json" ? dump(doc) : csv);
    return kExitOk;
}

int cmd_prop42(const CounterexampleFlags& f, const std::string& format, std::ostream& out) {
    auto propagation = counterexample_graph(f, true);
    const auto cx = mlp_counterexample(f.n, f.depth, f.k_zero, f.seed, propagation);
    const auto& inst = cx.instance;
    const auto grads = backward(inst.model, forward(inst.model, inst.x0), inst.labels).grads;
    json layers = json::array();
    std::string csv = "k,expected,measured\n";
    double worst = 0.0;
    for (std::size_t k = 0; k < grads.size(); ++k) {
        const double measured = grads[k](0, 0);
        json row{{"k", k}, {"measured", measured}};
        if (!cx.expected_grads.empty()) {
            row["expected"] = cx.expected_grads[k];
            worst = std::max(worst, std::abs(measured - cx.expected_grads[k]));
            csv += fmt::format("{},{},{}\n", k, cx.expected_grads[k], measured);
        } else {
            csv += fmt::format("{},,{}\n", k, measured);
        }
        layers.push_back(row);
    }
    json doc{{"construction", "prop42"},
             {"mode", propagation ? "gnn" : "mlp"},
             {"n", f.n},
             {"depth", f.depth},
             {"zeroed_layer", f.k_zero},
             {"seed", f.seed},
             {"layers", layers},
             {"last_layer_grad", grads.back()(0, 0)}};
    if (!cx.expected_grads.empty()) {
        doc["max_abs_deviation"] = worst;
        doc["holds"] = worst <= f.tol && grads.back()(0, 0) == 0.0;
    }
    out << (format == "json" ? dump(doc) : csv);
    return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------

int cmd_gradcheck(const SmallInstanceParams& params, double step, double tolerance, const std::string& format,
                  std::ostream& out) {
    const Instance inst = random_small_instance(params);
    const auto rep = grad_check(inst.model, inst.x0, inst.labels, step);
    json doc{{"n", params.n},
             {"depth", params.depth},
             {"width", params.width},
             {"seed", params.seed},
             {"activation", std::string(to_string(params.activation))},
             {"task", params.task == TaskKind::regression ? "regression" : "classification"},
             {"step", step},
             {"max_abs_err", rep.max_abs_err},
             {"max_rel_err", rep.max_rel_err},
             {"worst_layer", rep.worst_layer},
             {"tolerance", tolerance},
             {"pass", rep.max_rel_err < tolerance}};
    if (format == "json")
        out << dump(doc);
    else
        out << fmt::format("max_abs_err,max_rel_err,worst_layer,pass\n{},{},{},{}\n", rep.max_abs_err,
                           rep.max_rel_err, rep.worst_layer, rep.max_rel_err < tolerance);
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Forward and backward oversmoothing laboratory for vanilla GNNs", "smoothlab"};
    app.require_subcommand(1);
    app.fallthrough(false);
    std::string format = "json";

    auto* gen = app.add_subcommand("gen", "Generate CSBM graph, features and labels files");
    ExperimentFlags gen_flags;
    gen_flags.attach(gen, true);
    std::string gen_out = "data";
    gen->add_option("--out", gen_out, "Output directory");

    auto* train_cmd = app.add_subcommand("train", "Train with full-batch gradient descent");
    ExperimentFlags train_flags;
    train_flags.attach(train_cmd);
    std::string train_out = "runs";
    std::string experiment;
    train_cmd->add_option("--out", train_out, "Root directory for run directories");
    train_cmd->add_option("--experiment", experiment, "fig1: GNN/MLP x shallow/deep")->check(CLI::IsMember({"fig1"}));
    add_format(train_cmd, format);

    auto* profile_cmd = app.add_subcommand("profile", "Per-layer energy and gradient profile");
    ExperimentFlags profile_flags;
    profile_flags.attach(profile_cmd);
    std::string profile_ckpt;
    std::string profile_out;
    profile_cmd->add_option("--checkpoint", profile_ckpt, "Model checkpoint (default: fresh init)");
    profile_cmd->add_option("--out", profile_out, "Write the report to this file instead of stdout");
    add_format(profile_cmd, format);

    auto* bounds_cmd = app.add_subcommand("bounds", "Evaluate the smoothing and stationarity bounds");
    ExperimentFlags bounds_flags;
    bounds_flags.attach(bounds_cmd);
    BoundsFlags bf;
    bounds_cmd->add_option("--checkpoint", bf.checkpoint, "Model checkpoint (default: fresh init)");
    bounds_cmd->add_flag("--sweep", bf.sweep, "Grid over depths, alphas and q");
    bounds_cmd->add_option("--depths", bf.depths, "Sweep depths");
    bounds_cmd->add_option("--alphas", bf.alphas, "Sweep expansion rates");
    bounds_cmd->add_option("--qs", bf.qs, "Sweep q values (1, 2)");
    bounds_cmd->add_option("--c", bf.c, "Stationarity bound constant");
    bounds_cmd->add_option("--delta", bf.thm41.delta, "Target stationarity level");
    bounds_cmd->add_option("--delta-bar", bf.thm41.delta_bar, "Output-layer stationarity level");
    bounds_cmd->add_option("--d-f", bf.thm41.d_f, "Output lower bound");
    bounds_cmd->add_option("--nu", bf.thm41.nu, "Failure probability");
    bounds_cmd->add_option("--c-depth", bf.thm41.c_depth, "Constant for the depth condition");
    bounds_cmd->add_option("--c-delta-bar", bf.thm41.c_delta_bar, "Constant for the delta-bar condition");
    bounds_cmd->add_option("--c-nodes", bf.thm41.c_nodes, "Constant for the node-count condition");
    bounds_cmd->add_option("--case", bf.thm41_case, "lower-bounded-output|balanced-regression|balanced-classification");
    add_format(bounds_cmd, format);

    auto* cx = app.add_subcommand("counterexample", "Exact constructions");
    cx->require_subcommand(1);
    CounterexampleFlags cf;
    auto* prop32 = cx->add_subcommand("prop32", "Constant gradients with zero backward energy");
    auto* cor42 = cx->add_subcommand("cor42", "Zeroed output weight on Rademacher labels");
    auto* prop42 = cx->add_subcommand("prop42", "MLP with one zeroed layer");
    for (auto* sub : {prop32, cor42, prop42}) {
        sub->add_option("--n", cf.n, "Node count");
        sub->add_option("--seed", cf.seed, "Seed");
        add_format(sub, format);
    }
    for (auto* sub : {prop32, prop42}) {
        sub->add_option("--depth", cf.depth, "Depth L");
        sub->add_option("--tol", cf.tol, "Tolerance for the claimed values");
    }
    prop32->add_option("--graph", cf.graph, "ring|csbm");
    prop42->add_option("--graph", cf.graph, "none|ring|csbm (none: MLP)");
    prop42->add_option("--k-zero", cf.k_zero, "Zeroed layer index");
    cor42->add_option("--depth", cf.depths, "Depths to evaluate");
    cor42->add_option("--width", cf.width, "Hidden width");
    cor42->add_option("--c", cf.c, "Stationarity bound constant");

    auto* gradcheck = app.add_subcommand("gradcheck", "Compare backprop against finite differences");
    SmallInstanceParams params;
    std::string gc_activation = "centered-softplus";
    std::string gc_task = "regression";
    double gc_step = 1e-4;
    double gc_tol = 1e-5;
    gradcheck->add_option("--n", params.n, "Node count");
    gradcheck->add_option("--depth", params.depth, "Depth L");
    gradcheck->add_option("--width", params.width, "Width");
    gradcheck->add_option("--seed", params.seed, "Seed");
    gradcheck->add_option("--activation", gc_activation, "Activation");
    gradcheck->add_option("--task", gc_task, "regression|classification")
        ->check(CLI::IsMember({"regression", "classification"}));
    gradcheck->add_option("--step", gc_step, "Finite-difference step");
    gradcheck->add_option("--tol", gc_tol, "Pass threshold on max_rel_err");
    add_format(gradcheck, format);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << "error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_flags, gen_out, out);
        if (train_cmd->parsed()) return cmd_train(train_flags, train_out, experiment, format, out);
        if (profile_cmd->parsed()) return cmd_profile(profile_flags, profile_ckpt, format, profile_out, out);
        if (bounds_cmd->parsed()) return cmd_bounds(bounds_flags, bf, format, out);
        if (prop32->parsed()) return cmd_prop32(cf, format, out);
        if (cor42->parsed()) return cmd_cor42(cf, format, out);
        if (prop42->parsed()) {
            if (prop42->count("--graph") == 0) cf.graph = "none";
            return cmd_prop42(cf, format, out);
        }
        if (gradcheck->parsed()) {
            params.activation = parse_activation(gc_activation);
            params.task = gc_task == "regression" ? TaskKind::regression : TaskKind::classification;
            return cmd_gradcheck(params, gc_step, gc_tol, format, out);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitContract;
    }
    err << app.help();
    return kExitUsage;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace smoothlab::cli
