#include "smoothlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "smoothlab/digest.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/rng.hpp"

namespace smoothlab {

using json = nlohmann::json;

std::string_view to_string(ActivationKind kind) {
    switch (kind) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::centered_softplus: return "centered-softplus";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::relu: return "relu";
    case ActivationKind::softplus: return "softplus";
    }
    return "unknown";
}

ActivationKind parse_activation(std::string_view name) {
    for (auto kind : {ActivationKind::identity, ActivationKind::centered_softplus, ActivationKind::tanh,
                      ActivationKind::relu, ActivationKind::softplus}) {
        if (to_string(kind) == name) return kind;
    }
    throw ContractViolation("unknown activation '" + std::string(name) + "'");
}

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log((1 + e^x) / 2) without the cancellation of softplus(x) - log 2 near 0.
double centered_softplus(double x) {
    if (x > 30.0) return x + std::log1p(std::exp(-x)) - std::numbers::ln2;
    return std::log1p(0.5 * std::expm1(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

double Activation::apply(double x) const {
    switch (kind_) {
    case ActivationKind::identity: return x;
    case ActivationKind::centered_softplus: return centered_softplus(x);
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::relu: return x > 0.0 ? x : 0.0;
    case ActivationKind::softplus: return softplus(x);
    }
    return x;
}

double Activation::derivative(double x) const {
    switch (kind_) {
    case ActivationKind::identity: return 1.0;
    case ActivationKind::centered_softplus:
    case ActivationKind::softplus: return sigmoid(x);
    case ActivationKind::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    case ActivationKind::relu: return x > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

Matrix Activation::apply(const Matrix& m) const {
    Matrix out = m;
    for (double& v : out.values()) v = apply(v);
    return out;
}

Matrix Activation::derivative(const Matrix& m) const {
    Matrix out = m;
    for (double& v : out.values()) v = derivative(v);
    return out;
}

std::optional<double> Activation::derivative_lipschitz() const {
    switch (kind_) {
    case ActivationKind::identity: return 0.0;
    case ActivationKind::centered_softplus:
    case ActivationKind::softplus: return 0.25;
    // max |tanh''| = 4 / (3√3), attained where tanh² = 1/3.
    case ActivationKind::tanh: return 4.0 / (3.0 * std::sqrt(3.0));
    case ActivationKind::relu: return std::nullopt;
    }
    return std::nullopt;
}

bool Activation::meets_bound_assumptions() const {
    return kind_ != ActivationKind::relu && kind_ != ActivationKind::softplus;
}

ActivationCheck check_activation_assumptions(const Activation& a, double half_width,
                                             std::size_t grid_points) {
    require(grid_points >= 100, "check_activation_assumptions: need at least 100 grid points");
    require(half_width > 0.0, "check_activation_assumptions: half width must be positive");

    std::vector<double> grid(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i)
        grid[i] = -half_width + 2.0 * half_width * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    if (std::find(grid.begin(), grid.end(), 0.0) == grid.end()) {
        grid.push_back(0.0);
        std::sort(grid.begin(), grid.end());
    }

    ActivationCheck report;
    double worst_abs_excess = 0.0;
    double worst_slope_excess = 0.0;
    constexpr double kSlack = 1e-12;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid[i];
        const double fx = a.apply(x);
        const double excess = std::abs(fx) - std::abs(x);
        if (excess > kSlack && excess > worst_abs_excess) {
            worst_abs_excess = excess;
            report.abs_bound_ok = false;
            report.abs_bound_witness_x = x;
            report.abs_bound_witness_value = fx;
        }
        if (i + 1 == grid.size()) break;
        // The slope between any two grid points is a convex combination of
        // adjacent slopes, so adjacent pairs decide the all-pairs maximum.
        const double y = grid[i + 1];
        const double h = y - x;
        const double slope = std::abs(a.apply(y) - fx) / h;
        if (slope > 1.0 + kSlack && slope - 1.0 > worst_slope_excess) {
            worst_slope_excess = slope - 1.0;
            report.lipschitz_1_ok = false;
            report.lipschitz_witness_x = x;
        }
        const double dslope = std::abs(a.derivative(y) - a.derivative(x)) / h;
        report.rho_prime_lipschitz_estimate = std::max(report.rho_prime_lipschitz_estimate, dslope);
    }
    return report;
}

std::string_view to_string(InitScheme scheme) {
    return scheme == InitScheme::gaussian ? "gaussian" : "orthogonal";
}

InitScheme parse_init_scheme(std::string_view name) {
    if (name == "gaussian") return InitScheme::gaussian;
    if (name == "orthogonal") return InitScheme::orthogonal;
    throw ContractViolation("unknown init scheme '" + std::string(name) + "'");
}

namespace {

// Modified Gram-Schmidt on the columns of a tall matrix (two passes).
void orthonormalize_columns(Matrix& m) {
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            for (std::size_t prev = 0; prev < j; ++prev) {
                double dot = 0.0;
                for (std::size_t i = 0; i < m.rows(); ++i) dot += m(i, j) * m(i, prev);
                for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) -= dot * m(i, prev);
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < m.rows(); ++i) norm += m(i, j) * m(i, j);
            norm = std::sqrt(norm);
            require(norm > 1e-12, "orthogonal init: degenerate random draw");
            for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) /= norm;
        }
    }
}

} // namespace

std::vector<Matrix> init_weights(const std::vector<std::size_t>& dims, const InitConfig& config) {
    require(dims.size() >= 2, "init_weights: need at least input and output dimensions");
    require(std::all_of(dims.begin(), dims.end(), [](std::size_t d) { return d > 0; }),
            "init_weights: dimensions must be positive");
    require(config.std_scale > 0.0, "init_weights: std_scale must be positive");
    if (config.target_spectral_norm)
        require(*config.target_spectral_norm > 0.0, "init_weights: target spectral norm must be positive");

    CounterRng rng(config.seed, streams::kWeights);
    std::vector<Matrix> weights;
    weights.reserve(dims.size() - 1);
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        const std::size_t d_in = dims[k];
        const std::size_t d_out = dims[k + 1];
        Matrix w(d_in, d_out);
        const double std = config.std_scale / std::sqrt(static_cast<double>(d_in));
        for (double& v : w.values()) v = std * rng.normal();

        if (config.scheme == InitScheme::orthogonal) {
            if (d_in >= d_out) {
                orthonormalize_columns(w);
            } else {
                Matrix t = transpose(w);
                orthonormalize_columns(t);
                w = transpose(t);
            }
            w *= config.std_scale;
        }
        if (config.target_spectral_norm) {
            const double s = spectral_norm(w);
            require(s > 0.0, "init_weights: cannot rescale a zero matrix");
            w *= *config.target_spectral_norm / s;
        }
        weights.push_back(std::move(w));
    }
    return weights;
}

std::vector<std::size_t> constant_width_dims(std::size_t input_dim, std::size_t width,
                                             std::size_t output_dim, std::size_t depth) {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t k = 0; k < depth; ++k) dims.push_back(width);
    dims.push_back(output_dim);
    return dims;
}

GnnModel::GnnModel(std::vector<Matrix> weights, Activation activation,
                   std::shared_ptr<const PropagationMatrix> propagation)
    : weights_(std::move(weights)), activation_(activation), propagation_(std::move(propagation)) {
    require(!weights_.empty(), "GnnModel: need at least one weight matrix");
    for (std::size_t k = 0; k + 1 < weights_.size(); ++k) {
        require(weights_[k].cols() == weights_[k + 1].rows(),
                "GnnModel: weight " + std::to_string(k) + " has " + std::to_string(weights_[k].cols()) +
                    " columns but weight " + std::to_string(k + 1) + " has " +
                    std::to_string(weights_[k + 1].rows()) + " rows");
    }
    spectral_norms_.reserve(weights_.size());
    for (const auto& w : weights_) {
        require(!w.empty() && w.all_finite(), "GnnModel: weights must be non-empty and finite");
        spectral_norms_.push_back(spectral_norm(w));
    }
}

std::vector<std::size_t> GnnModel::dims() const {
    std::vector<std::size_t> d;
    d.push_back(weights_.front().rows());
    for (const auto& w : weights_) d.push_back(w.cols());
    return d;
}

std::size_t GnnModel::parameter_count() const {
    std::size_t total = 0;
    for (const auto& w : weights_) total += w.size();
    return total;
}

void GnnModel::set_weight(std::size_t k, Matrix w) {
    require(k < weights_.size(), "set_weight: layer index out of range");
    require(w.rows() == weights_[k].rows() && w.cols() == weights_[k].cols(),
            "set_weight: shape mismatch at layer " + std::to_string(k));
    require(w.all_finite(), "set_weight: non-finite weights at layer " + std::to_string(k));
    spectral_norms_[k] = spectral_norm(w);
    weights_[k] = std::move(w);
}

double GnnModel::max_spectral_norm() const {
    return *std::max_element(spectral_norms_.begin(), spectral_norms_.end());
}

Matrix GnnModel::propagate(const Matrix& x) const {
    if (!propagation_) return x;
    return matmul(propagation_->matrix(), x);
}

ForwardTrace forward(const GnnModel& model, const Matrix& x0) {
    const std::size_t depth = model.depth();
    if (model.propagation())
        require(x0.rows() == model.propagation()->size(),
                "forward: input has " + std::to_string(x0.rows()) + " rows but the graph has " +
                    std::to_string(model.propagation()->size()) + " nodes");
    ForwardTrace trace;
    trace.input_row_norm = max_row_norm(x0);
    trace.x.reserve(depth + 1);
    trace.f.reserve(depth + 1);
    trace.h.reserve(depth + 1);
    trace.x.push_back(x0);
    for (std::size_t k = 0; k <= depth; ++k) {
        const Matrix& w = model.weight(k);
        require(trace.x[k].cols() == w.rows(),
                "forward: layer " + std::to_string(k) + " expects width " + std::to_string(w.rows()) +
                    ", got " + std::to_string(trace.x[k].cols()));
        trace.f.push_back(model.propagate(trace.x[k]));
        trace.h.push_back(matmul(trace.f[k], w));
        if (k < depth) trace.x.push_back(model.activation().apply(trace.h[k]));
    }
    return trace;
}

std::string serialize_checkpoint(const GnnModel& model, const CheckpointMeta& meta) {
    std::vector<double> flat;
    flat.reserve(model.parameter_count());
    for (const auto& w : model.weights()) flat.insert(flat.end(), w.values().begin(), w.values().end());
    json doc;
    doc["format"] = "smoothlab-checkpoint";
    doc["version"] = 1;
    doc["dims"] = model.dims();
    doc["activation"] = std::string(model.activation().name());
    doc["mode"] = model.is_mlp() ? "mlp" : "gnn";
    doc["seed"] = meta.seed;
    doc["propagation_hash"] = model.is_mlp() ? json(nullptr) : json(model.propagation()->content_hash());
    doc["encoding"] = "base64 float64 little-endian, layer-major, row-major";
    doc["weights"] = base64_encode(flat);
    return doc.dump(2) + "\n";
}

void save_checkpoint(const GnnModel& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write checkpoint " + path.string());
    out << serialize_checkpoint(model, meta);
}

GnnModel parse_checkpoint(std::string_view text, std::shared_ptr<const PropagationMatrix> propagation,
                          CheckpointMeta* meta) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (doc.value("format", "") != "smoothlab-checkpoint" || doc.value("version", 0) != 1)
        throw ParseError("checkpoint: unsupported format or version");
    try {
        const auto dims = doc.at("dims").get<std::vector<std::size_t>>();
        const Activation activation(parse_activation(doc.at("activation").get<std::string>()));
        const bool mlp = doc.at("mode").get<std::string>() == "mlp";
        if (mlp) {
            propagation.reset();
        } else {
            require(propagation != nullptr, "checkpoint: GNN checkpoint needs a propagation matrix");
            const auto expected = doc.at("propagation_hash").get<std::string>();
            require(expected == propagation->content_hash(),
                    "checkpoint: propagation matrix does not match the stored hash");
        }
        const auto flat = base64_decode_doubles(doc.at("weights").get<std::string>());
        std::vector<Matrix> weights;
        std::size_t offset = 0;
        for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
            const std::size_t count = dims[k] * dims[k + 1];
            if (offset + count > flat.size()) throw ParseError("checkpoint: weight payload too short");
            weights.push_back(Matrix::from_data(
                dims[k], dims[k + 1],
                std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                                    flat.begin() + static_cast<std::ptrdiff_t>(offset + count))));
            offset += count;
        }
        if (offset != flat.size()) throw ParseError("checkpoint: weight payload has trailing values");
        if (meta) meta->seed = doc.value("seed", std::uint64_t{0});
        return GnnModel(std::move(weights), activation, std::move(propagation));
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

GnnModel load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const PropagationMatrix> propagation,
                         CheckpointMeta* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_checkpoint(buffer.str(), std::move(propagation), meta);
}

} // namespace smoothlab
