#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothlab/loss.hpp"
#include "smoothlab/model.hpp"

namespace smoothlab {

/// Everything the closed-form bounds depend on.
struct BoundInputs {
    /// Second-largest absolute eigenvalue of P, in [0, 1).
    double lambda = 0.0;
    /// s = max_k s_k.
    double s = 1.0;
    std::size_t depth = 0;
    /// D_X: largest input row norm.
    double d_x = 1.0;
    /// D_ρ: Lipschitz constant of ρ′.
    double d_rho = 0.0;
    double d_l = 0.0;
    double d_l_prime = 0.0;
    /// Loss normalizer count (n, or n_labeled when normalizing by labeled nodes).
    double n = 1.0;
    /// Expansion rate, s ≤ λ^{-α}.
    double alpha = 0.0;
    /// 2 for regression, 1 for classification.
    int q = 1;

    /// Reads every constant off a concrete GNN instance. Throws for MLP models
    /// and for activations outside the smoothness assumptions (relu, raw softplus).
    static BoundInputs from_instance(const GnnModel& model, const Matrix& x0, const LabelSet& labels);

    nlohmann::json to_json() const;
};

/// α = log(s)/log(1/λ) for s > 1, else 0.
double expansion_rate(double s, double lambda);

/// (λs)^k · e0. Throws when λs ≥ 1.
double forward_bound(const BoundInputs& b, std::size_t k, double e0);

/// ((D_X D_L s^{L+1} + D′_L)/n) · (D_ρ max(1, D_X) s^{L+1} λ^{k+1}/(1 − λ²s) + (λs)^{L−k}).
/// Throws when λ²s ≥ 1.
double backward_bound(const BoundInputs& b, std::size_t k);

struct CorExponents {
    /// (β − qα) log(1/λ)
    double rate1 = 0.0;
    /// (1 − qα − (1−α)β) log(1/λ)
    double rate2 = 0.0;
    bool admissible = false;
};

CorExponents cor_backward_exponents(const BoundInputs& b, double beta);
/// Midpoint of the admissible β interval (qα, (1 − qα)/(1 − α)).
double cor_backward_midpoint_beta(double alpha, int q);

/// ξ_q(α) = (1 − (2q+1)α + qα²) / (2(1 − α)).
double xi(double alpha, int q);
/// Smallest root of ξ_q: 1 + 1/(2q) − sqrt(1 + 1/(4q²)).
double alpha_threshold(int q);

/// c · (λ^{ξ_q(α) L} + λ^{−αL} ε_n). Throws when ξ_q(α) ≤ 0.
double global_stationarity_bound(const BoundInputs& b, double epsilon_n, double c = 1.0);

enum class Thm41Case { lower_bounded_output, balanced_regression, balanced_classification };

std::string to_string(Thm41Case c);
Thm41Case parse_thm41_case(const std::string& name);

struct Thm41Params {
    /// Lower bound on (1/√n)‖F^(L)‖_F (lower-bounded-output case).
    double d_f = 1.0;
    double delta = 0.1;
    double delta_bar = 0.0;
    /// Failure probability (balanced cases).
    double nu = 0.05;
    /// Constants hidden behind ≳ / ≲, one per displayed inequality.
    double c_depth = 1.0;
    double c_delta_bar = 1.0;
    double c_nodes = 1.0;
};

struct InequalityCheck {
    std::string name;
    double lhs = 0.0;
    /// ">=" or "<="
    std::string relation;
    double rhs = 0.0;
    bool satisfied = false;
};

struct Thm41Report {
    Thm41Case which = Thm41Case::lower_bounded_output;
    bool applicable = false;
    std::string reason;
    double rate_exponent = 0.0;
    /// ceil of the depth condition's right-hand side.
    std::size_t min_depth = 0;
    std::vector<InequalityCheck> conditions;
    bool all_satisfied = false;

    nlohmann::json to_json() const;
};

/// Evaluates each displayed condition with the given constants and reports both sides.
Thm41Report thm41_condition_report(const BoundInputs& b, const Thm41Params& params, Thm41Case which);

/// One (theorem, k or L) comparison. `bound`/`satisfied` are empty when the
/// instance lies outside the theorem's regime; `note` then says why.
struct BoundRecord {
    std::string theorem;
    nlohmann::json inputs;
    std::optional<double> bound;
    double measured = 0.0;
    std::optional<bool> satisfied;
    std::string note;
};

nlohmann::json to_json(const BoundRecord& record);
nlohmann::json to_json(const std::vector<BoundRecord>& records);

/// Forward and backward per-layer checks, the middle-layer backward rate at the
/// admissible midpoint β, and the global stationarity bound with constant c.
std::vector<BoundRecord> evaluate_instance_bounds(const GnnModel& model, const Matrix& x0, const LabelSet& labels,
                                                  double stationarity_constant = 1.0);

} // namespace smoothlab
