#include "smoothlab/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "smoothlab/backprop.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/metrics.hpp"

namespace smoothlab {

namespace {

void check_lambda(double lambda) {
    require(lambda >= 0.0 && lambda < 1.0, "bounds: lambda must lie in [0, 1)");
}

void check_q(int q) { require(q == 1 || q == 2, "bounds: q must be 1 or 2"); }

// λ^e with the convention 0^0 = 1 and 0^e = 0 for e > 0.
double lambda_pow(double lambda, double e) {
    if (lambda == 0.0) return e > 0.0 ? 0.0 : 1.0;
    return std::pow(lambda, e);
}

double log_inv_lambda(double lambda) {
    require(lambda > 0.0, "bounds: rate exponents need lambda > 0");
    return -std::log(lambda);
}

} // namespace

BoundInputs BoundInputs::from_instance(const GnnModel& model, const Matrix& x0, const LabelSet& labels) {
    require(!model.is_mlp(), "bounds: the smoothing bounds need a graph; got an MLP model");
    const auto& act = model.activation();
    require(act.meets_bound_assumptions(),
            "bounds: activation '" + std::string(act.name()) +
                "' violates the smoothness assumptions (Lipschitz derivative, |rho(x)| <= |x|)");
    require(labels.node_count() == x0.rows(), "bounds: label count does not match the feature rows");
    BoundInputs b;
    b.lambda = model.propagation()->lambda();
    b.s = model.max_spectral_norm();
    b.depth = model.depth();
    b.d_x = max_row_norm(x0);
    b.d_rho = act.derivative_lipschitz().value_or(0.0);
    const auto constants = loss_constants(labels);
    b.d_l = constants.d_l;
    b.d_l_prime = constants.d_l_prime;
    b.n = 1.0 / labels.weight();
    b.alpha = expansion_rate(b.s, b.lambda);
    b.q = labels.is_regression() ? 2 : 1;
    return b;
}

nlohmann::json BoundInputs::to_json() const {
    return {{"lambda", lambda}, {"s", s},     {"depth", depth}, {"d_x", d_x}, {"d_rho", d_rho},
            {"d_l", d_l},       {"d_l_prime", d_l_prime},       {"n", n},     {"alpha", alpha},
            {"q", q}};
}

double expansion_rate(double s, double lambda) {
    check_lambda(lambda);
    require(s > 0.0, "expansion_rate: s must be positive");
    if (s <= 1.0) return 0.0;
    return std::log(s) / log_inv_lambda(lambda);
}

double forward_bound(const BoundInputs& b, std::size_t k, double e0) {
    check_lambda(b.lambda);
    require(b.lambda * b.s < 1.0, "forward_bound: needs lambda * s < 1");
    return std::pow(b.lambda * b.s, static_cast<double>(k)) * e0;
}

double backward_bound(const BoundInputs& b, std::size_t k) {
    check_lambda(b.lambda);
    require(k <= b.depth, "backward_bound: layer index exceeds depth");
    require(b.lambda * b.lambda * b.s < 1.0, "backward_bound: needs lambda^2 * s < 1");
    require(b.n > 0.0, "backward_bound: n must be positive");
    const double L = static_cast<double>(b.depth);
    const double s_pow = std::pow(b.s, L + 1.0);
    const double prefactor = (b.d_x * b.d_l * s_pow + b.d_l_prime) / b.n;
    // E(X^(0)) ≤ D_X enters the curvature term; for D_X ≤ 1 it is dominated by 1.
    const double curvature = b.d_rho * std::max(1.0, b.d_x) * s_pow / (1.0 - b.lambda * b.lambda * b.s) *
                             lambda_pow(b.lambda, static_cast<double>(k) + 1.0);
    const double smoothing = std::pow(b.lambda * b.s, L - static_cast<double>(k));
    return prefactor * (curvature + smoothing);
}

CorExponents cor_backward_exponents(const BoundInputs& b, double beta) {
    check_lambda(b.lambda);
    check_q(b.q);
    const double q = b.q;
    const double a = b.alpha;
    const double log_inv = log_inv_lambda(b.lambda);
    CorExponents out;
    out.rate1 = (beta - q * a) * log_inv;
    out.rate2 = (1.0 - q * a - (1.0 - a) * beta) * log_inv;
    const double alpha_cap = 1.0 - std::sqrt(1.0 - 1.0 / q);
    out.admissible = a < alpha_cap && q * a < beta && beta < (1.0 - q * a) / (1.0 - a);
    return out;
}

double cor_backward_midpoint_beta(double alpha, int q) {
    check_q(q);
    require(alpha >= 0.0 && alpha < 1.0, "cor_backward_midpoint_beta: alpha must lie in [0, 1)");
    return 0.5 * (q * alpha + (1.0 - q * alpha) / (1.0 - alpha));
}

double xi(double alpha, int q) {
    check_q(q);
    require(alpha >= 0.0 && alpha < 1.0, "xi: alpha must lie in [0, 1)");
    return (1.0 - (2.0 * q + 1.0) * alpha + q * alpha * alpha) / (2.0 * (1.0 - alpha));
}

double alpha_threshold(int q) {
    check_q(q);
    const double qd = q;
    return 1.0 + 1.0 / (2.0 * qd) - std::sqrt(1.0 + 1.0 / (4.0 * qd * qd));
}

double global_stationarity_bound(const BoundInputs& b, double epsilon_n, double c) {
    check_lambda(b.lambda);
    require(epsilon_n >= 0.0, "global_stationarity_bound: epsilon_n must be non-negative");
    const double x = xi(b.alpha, b.q);
    require(x > 0.0, "global_stationarity_bound: xi_q(alpha) <= 0, alpha is above the threshold " +
                         std::to_string(alpha_threshold(b.q)));
    const double L = static_cast<double>(b.depth);
    const double blowup = b.lambda == 0.0 ? 1.0 : std::pow(b.lambda, -b.alpha * L);
    return c * (lambda_pow(b.lambda, x * L) + blowup * epsilon_n);
}

std::string to_string(Thm41Case c) {
    switch (c) {
    case Thm41Case::lower_bounded_output: return "lower-bounded-output";
    case Thm41Case::balanced_regression: return "balanced-regression";
    case Thm41Case::balanced_classification: return "balanced-classification";
    }
    return "?";
}

Thm41Case parse_thm41_case(const std::string& name) {
    for (auto c : {Thm41Case::lower_bounded_output, Thm41Case::balanced_regression,
                   Thm41Case::balanced_classification})
        if (name == to_string(c)) return c;
    throw ContractViolation("unknown case '" + name +
                            "' (expected lower-bounded-output, balanced-regression or balanced-classification)");
}

nlohmann::json Thm41Report::to_json() const {
    nlohmann::json conds = nlohmann::json::array();
    for (const auto& c : conditions)
        conds.push_back({{"name", c.name}, {"lhs", c.lhs}, {"relation", c.relation}, {"rhs", c.rhs},
                         {"satisfied", c.satisfied}});
    return {{"case", to_string(which)},         {"applicable", applicable}, {"reason", reason},
            {"rate_exponent", rate_exponent},   {"min_depth", min_depth},   {"conditions", conds},
            {"all_satisfied", all_satisfied}};
}

Thm41Report thm41_condition_report(const BoundInputs& b, const Thm41Params& p, Thm41Case which) {
    check_lambda(b.lambda);
    require(b.lambda > 0.0, "thm41_condition_report: lambda must be positive");
    require(p.delta > 0.0 && p.delta < 1.0, "thm41_condition_report: delta must lie in (0, 1)");
    require(p.delta_bar >= 0.0, "thm41_condition_report: delta_bar must be non-negative");

    Thm41Report r;
    r.which = which;
    const double L = static_cast<double>(b.depth);
    const double log_inv = -std::log(b.lambda);
    auto at_least = [](std::string name, double lhs, double rhs) {
        return InequalityCheck{std::move(name), lhs, ">=", rhs, lhs >= rhs};
    };
    auto at_most = [](std::string name, double lhs, double rhs) {
        return InequalityCheck{std::move(name), lhs, "<=", rhs, lhs <= rhs};
    };

    double depth_numerator = 0.0;
    switch (which) {
    case Thm41Case::lower_bounded_output: {
        require(p.d_f > 0.0, "thm41_condition_report: d_f must be positive");
        r.rate_exponent = xi(b.alpha, b.q);
        depth_numerator = std::log(1.0 / (p.d_f * p.delta));
        break;
    }
    case Thm41Case::balanced_regression:
        r.rate_exponent = xi(b.alpha, 2);
        depth_numerator = std::log(1.0 / p.delta);
        break;
    case Thm41Case::balanced_classification:
        r.rate_exponent = 1.0 - 3.0 * b.alpha;
        depth_numerator = std::log(1.0 / p.delta);
        break;
    }
    if (which == Thm41Case::balanced_classification && b.alpha >= 1.0 / 3.0) {
        r.reason = "alpha >= 1/3";
        return r;
    }
    if (r.rate_exponent <= 0.0) {
        r.reason = "rate exponent is not positive (alpha above threshold)";
        return r;
    }
    r.applicable = true;

    const double depth_rhs = p.c_depth * std::max(0.0, depth_numerator) / (r.rate_exponent * log_inv);
    r.min_depth = static_cast<std::size_t>(std::ceil(depth_rhs));
    r.conditions.push_back(at_least("depth", L, depth_rhs));

    if (which == Thm41Case::lower_bounded_output) {
        const double rhs = p.c_delta_bar * std::pow(b.lambda, b.alpha * L) * p.d_f * p.delta;
        r.conditions.push_back(at_most("delta_bar", p.delta_bar, rhs));
    } else {
        require(p.nu > 0.0 && p.nu < 1.0, "thm41_condition_report: nu must lie in (0, 1)");
        const double blowup = std::pow(b.lambda, -2.0 * b.alpha * L);
        const double n_rhs = p.c_nodes * blowup * std::log(1.0 / p.nu) / (p.delta * p.delta);
        r.conditions.push_back(at_least("nodes", b.n, n_rhs));
        const double bar_rhs = p.c_delta_bar * p.delta * p.delta / blowup;
        r.conditions.push_back(at_most("delta_bar", p.delta_bar, bar_rhs));
    }
    r.all_satisfied = std::all_of(r.conditions.begin(), r.conditions.end(),
                                  [](const InequalityCheck& c) { return c.satisfied; });
    return r;
}

nlohmann::json to_json(const BoundRecord& record) {
    nlohmann::json out{{"theorem", record.theorem}, {"inputs", record.inputs}, {"measured", record.measured}};
    out["bound"] = record.bound ? nlohmann::json(*record.bound) : nlohmann::json(nullptr);
    out["satisfied"] = record.satisfied ? nlohmann::json(*record.satisfied) : nlohmann::json(nullptr);
    if (!record.note.empty()) out["note"] = record.note;
    return out;
}

nlohmann::json to_json(const std::vector<BoundRecord>& records) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : records) out.push_back(to_json(r));
    return out;
}

std::vector<BoundRecord> evaluate_instance_bounds(const GnnModel& model, const Matrix& x0, const LabelSet& labels,
                                                  double stationarity_constant) {
    const BoundInputs b = BoundInputs::from_instance(model, x0, labels);
    const auto trace = forward(model, x0);
    const auto btrace = backward(model, trace, labels);
    const double e0 = energy(x0);
    std::vector<BoundRecord> out;

    const bool forward_ok = b.lambda * b.s < 1.0;
    for (std::size_t k = 0; k <= b.depth; ++k) {
        BoundRecord r{"forward-smoothing", {{"k", k}}, std::nullopt, energy(trace.x[k]), std::nullopt, ""};
        if (forward_ok) {
            r.bound = forward_bound(b, k, e0);
            r.satisfied = r.measured <= *r.bound * (1.0 + 1e-9) + 1e-15;
        } else {
            r.note = "lambda * s >= 1";
        }
        out.push_back(std::move(r));
    }

    const bool backward_ok = b.lambda * b.lambda * b.s < 1.0;
    for (std::size_t k = 0; k <= b.depth; ++k) {
        BoundRecord r{"backward-smoothing", {{"k", k}}, std::nullopt, energy(btrace.b[k]), std::nullopt, ""};
        if (backward_ok) {
            r.bound = backward_bound(b, k);
            r.satisfied = r.measured <= *r.bound * (1.0 + 1e-9) + 1e-15;
        } else {
            r.note = "lambda^2 * s >= 1";
        }
        out.push_back(std::move(r));
    }

    if (b.lambda > 0.0 && b.depth > 0) {
        const double beta = cor_backward_midpoint_beta(std::min(b.alpha, 0.999), b.q);
        const auto ex = cor_backward_exponents(b, beta);
        const auto k = static_cast<std::size_t>(
            std::clamp(std::round(beta * static_cast<double>(b.depth)), 0.0, static_cast<double>(b.depth)));
        BoundRecord r{"backward-rate",
                      {{"k", k}, {"beta", beta}, {"rate1", ex.rate1}, {"rate2", ex.rate2}},
                      std::nullopt,
                      energy(btrace.b[k]),
                      std::nullopt,
                      "hidden constant taken as 1"};
        if (ex.admissible) {
            const double L = static_cast<double>(b.depth);
            r.bound = (std::exp(-ex.rate1 * L) + std::exp(-ex.rate2 * L)) / b.n;
            r.satisfied = r.measured <= *r.bound;
        } else {
            r.note = "beta outside the admissible interval";
        }
        out.push_back(std::move(r));
    }

    {
        double max_grad = 0.0;
        for (const auto& g : btrace.grads) max_grad = std::max(max_grad, frobenius_norm(g));
        const double eps = epsilon_n(btrace.b.back());
        BoundRecord r{"global-stationarity",
                      {{"depth", b.depth}, {"epsilon_n", eps}, {"c", stationarity_constant}},
                      std::nullopt,
                      max_grad,
                      std::nullopt,
                      ""};
        if (xi(std::min(b.alpha, 0.999), b.q) > 0.0) {
            r.bound = global_stationarity_bound(b, eps, stationarity_constant);
            r.satisfied = r.measured <= *r.bound;
            r.note = "hidden constant c as given";
        } else {
            r.note = "alpha above threshold";
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace smoothlab
