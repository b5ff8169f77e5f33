#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smoothlab/graph.hpp"
#include "smoothlab/numkit.hpp"

namespace smoothlab {

enum class ActivationKind {
    identity,
    /// log(1 + e^x) - log 2
    centered_softplus,
    tanh,
    relu,
    /// log(1 + e^x); only for demonstrating the |ρ(x)| ≤ |x| violation.
    softplus,
};

std::string_view to_string(ActivationKind kind);
ActivationKind parse_activation(std::string_view name);

class Activation {
public:
    explicit Activation(ActivationKind kind = ActivationKind::centered_softplus) : kind_(kind) {}

    ActivationKind kind() const { return kind_; }
    std::string_view name() const { return to_string(kind_); }

    double apply(double x) const;
    double derivative(double x) const;
    Matrix apply(const Matrix& m) const;
    Matrix derivative(const Matrix& m) const;

    /// Lipschitz constant of ρ′, or nullopt when ρ′ is discontinuous (relu).
    std::optional<double> derivative_lipschitz() const;
    /// True when the kind is usable in the backward bounds (ρ′ Lipschitz and |ρ| ≤ |x|).
    bool meets_bound_assumptions() const;

    friend bool operator==(const Activation&, const Activation&) = default;

private:
    ActivationKind kind_;
};

struct ActivationCheck {
    bool lipschitz_1_ok = true;
    bool abs_bound_ok = true;
    double rho_prime_lipschitz_estimate = 0.0;
    /// Worst violation of |ρ(x)| ≤ |x| (x, ρ(x)); set only when abs_bound_ok is false.
    std::optional<double> abs_bound_witness_x;
    std::optional<double> abs_bound_witness_value;
    /// Worst violation of 1-Lipschitzness (left grid point); set only on failure.
    std::optional<double> lipschitz_witness_x;
};

/// Checks both activation inequalities on a uniform grid over
/// [-half_width, half_width] (0 is always included) and estimates the
/// Lipschitz constant of ρ′ by the largest divided difference.
ActivationCheck check_activation_assumptions(const Activation& a, double half_width = 10.0,
                                             std::size_t grid_points = 2001);

enum class InitScheme { gaussian, orthogonal };

struct InitConfig {
    InitScheme scheme = InitScheme::gaussian;
    /// Gaussian entries are N(0, std_scale² / d_in).
    double std_scale = 1.0;
    /// If set, every W^(k) is rescaled to this spectral norm.
    std::optional<double> target_spectral_norm;
    std::uint64_t seed = 0;
};

std::string_view to_string(InitScheme scheme);
InitScheme parse_init_scheme(std::string_view name);

/// Weights W^(0..L) with W^(k) of shape dims[k] x dims[k+1].
std::vector<Matrix> init_weights(const std::vector<std::size_t>& dims, const InitConfig& config);

/// Layer widths d_0, d, ..., d, d_out for `depth` hidden propagation steps.
std::vector<std::size_t> constant_width_dims(std::size_t input_dim, std::size_t width,
                                             std::size_t output_dim, std::size_t depth);

/// Vanilla GNN X^(k+1) = ρ(P X^(k) W^(k)), out = P X^(L) W^(L).
/// A null propagation runs the MLP case P = Id.
class GnnModel {
public:
    GnnModel(std::vector<Matrix> weights, Activation activation,
             std::shared_ptr<const PropagationMatrix> propagation);

    /// L: number of activated layers. There are L + 1 weight matrices.
    std::size_t depth() const { return weights_.size() - 1; }
    std::vector<std::size_t> dims() const;
    std::size_t parameter_count() const;

    const std::vector<Matrix>& weights() const { return weights_; }
    const Matrix& weight(std::size_t k) const { return weights_.at(k); }
    void set_weight(std::size_t k, Matrix w);

    const Activation& activation() const { return activation_; }
    bool is_mlp() const { return propagation_ == nullptr; }
    const std::shared_ptr<const PropagationMatrix>& propagation() const { return propagation_; }

    /// s_k, cached and refreshed by set_weight.
    const std::vector<double>& spectral_norms() const { return spectral_norms_; }
    double max_spectral_norm() const;

    /// P x, or x in MLP mode.
    Matrix propagate(const Matrix& x) const;

private:
    std::vector<Matrix> weights_;
    Activation activation_;
    std::shared_ptr<const PropagationMatrix> propagation_;
    std::vector<double> spectral_norms_;
};

struct ForwardTrace {
    /// X^(0..L)
    std::vector<Matrix> x;
    /// F^(k) = P X^(k)
    std::vector<Matrix> f;
    /// H^(k) = F^(k) W^(k)
    std::vector<Matrix> h;
    /// D_X: largest row norm of X^(0).
    double input_row_norm = 0.0;

    const Matrix& output() const { return h.back(); }
};

ForwardTrace forward(const GnnModel& model, const Matrix& x0);

/// JSON header plus base64 little-endian float64 weights, layer-major.
struct CheckpointMeta {
    std::uint64_t seed = 0;
};
std::string serialize_checkpoint(const GnnModel& model, const CheckpointMeta& meta);
void save_checkpoint(const GnnModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
/// `propagation` must match the stored hash (or be null for an MLP checkpoint).
GnnModel parse_checkpoint(std::string_view text, std::shared_ptr<const PropagationMatrix> propagation,
                          CheckpointMeta* meta = nullptr);
GnnModel load_checkpoint(const std::filesystem::path& path,
                         std::shared_ptr<const PropagationMatrix> propagation,
                         CheckpointMeta* meta = nullptr);

} // namespace smoothlab
