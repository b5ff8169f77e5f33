#include <doctest.h>

#include <cmath>

#include "smoothlab/backprop.hpp"
#include "smoothlab/bounds.hpp"
#include "smoothlab/constructions.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/metrics.hpp"
#include "test_support.hpp"

using namespace smoothlab;

namespace {

BoundInputs inputs(double lambda, double s, std::size_t depth) {
    BoundInputs b;
    b.lambda = lambda;
    b.s = s;
    b.depth = depth;
    b.n = 10;
    b.d_x = 1.0;
    b.d_rho = 0.25;
    b.d_l = 1.0;
    b.d_l_prime = 1.0;
    b.q = 2;
    b.alpha = expansion_rate(s, lambda);
    return b;
}

} // namespace

TEST_CASE("expansion rate") {
    CHECK(expansion_rate(1.0, 0.5) == 0.0);
    CHECK(expansion_rate(0.7, 0.5) == 0.0);
    CHECK(expansion_rate(std::pow(0.5, -0.2), 0.5) == doctest::Approx(0.2));
}

TEST_CASE("forward bound") {
    auto b = inputs(0.5, 1.0, 5);
    CHECK(forward_bound(b, 3, 2.0) == doctest::Approx(0.25));
    CHECK(forward_bound(b, 0, 2.0) == 2.0);
    b.s = 2.0;
    CHECK_THROWS_AS(forward_bound(b, 1, 1.0), ContractViolation);
}

TEST_CASE("backward bound") {
    SUBCASE("classification substitution") {
        BoundInputs b;
        b.lambda = 0.6;
        b.s = 1.0;
        b.depth = 12;
        b.n = 50;
        b.d_x = 0.8;
        b.d_rho = 0.25;
        b.d_l = 0.0;
        b.d_l_prime = 4.0;
        for (std::size_t k = 0; k <= 12; ++k) {
            const double expected =
                (4.0 / 50.0) * (0.25 * std::pow(0.6, k + 1.0) / (1 - 0.36) + std::pow(0.6, 12.0 - k));
            CHECK(backward_bound(b, k) == doctest::Approx(expected).epsilon(1e-13));
        }
    }
    SUBCASE("unit feature bound matches the closed form without the max(1, D_X) factor") {
        auto b = inputs(0.7, 1.1, 8);
        b.d_x = 0.9;
        const double sl = std::pow(1.1, 9.0);
        for (std::size_t k = 0; k <= 8; ++k) {
            const double expected = ((0.9 * sl + 1.0) / 10.0) *
                                    (0.25 * sl * std::pow(0.7, k + 1.0) / (1 - 0.49 * 1.1) +
                                     std::pow(0.77, 8.0 - k));
            CHECK(backward_bound(b, k) == doctest::Approx(expected).epsilon(1e-13));
        }
    }
    SUBCASE("regime check") {
        auto b = inputs(0.9, 1.3, 4);
        CHECK_THROWS_AS(backward_bound(b, 1), ContractViolation);
    }
}

TEST_CASE("corollary exponents") {
    auto b = inputs(0.5, 1.0, 10);
    b.q = 1;
    const auto e = cor_backward_exponents(b, 0.5);
    CHECK(e.admissible);
    CHECK(e.rate1 == doctest::Approx(0.5 * std::log(2.0)));
    CHECK(e.rate2 == doctest::Approx(0.5 * std::log(2.0)));

    b.q = 2;
    b.alpha = 0.5;
    CHECK_FALSE(cor_backward_exponents(b, 0.9).admissible);
    CHECK_FALSE(cor_backward_exponents(b, 0.5).admissible);

    b.alpha = 0.1;
    const double beta = cor_backward_midpoint_beta(0.1, 2);
    CHECK(beta == doctest::Approx(0.5 * (0.2 + 0.8 / 0.9)));
    const auto mid = cor_backward_exponents(b, beta);
    CHECK(mid.admissible);
    CHECK(mid.rate1 > 0.0);
    CHECK(mid.rate2 > 0.0);
    CHECK_FALSE(cor_backward_exponents(b, 0.15).admissible);
}

TEST_CASE("xi and thresholds") {
    CHECK(xi(0.0, 1) == 0.5);
    CHECK(xi(0.0, 2) == 0.5);
    CHECK(alpha_threshold(1) == doctest::Approx(0.3819660112501051).epsilon(1e-12));
    CHECK(alpha_threshold(2) == doctest::Approx(1.25 - std::sqrt(17.0) / 4.0).epsilon(1e-12));
    CHECK(alpha_threshold(2) == doctest::Approx(0.2192235935955849).epsilon(1e-12));
    for (int q : {1, 2}) {
        const double t = alpha_threshold(q);
        CHECK(std::abs(xi(t, q)) <= 1e-12);
        double prev = xi(0.0, q);
        for (int i = 1; i <= 100; ++i) {
            const double cur = xi(t * i / 100.0, q);
            CHECK(cur < prev);
            prev = cur;
        }
        CHECK(xi(t + 0.01, q) < 0.0);
    }
}

TEST_CASE("global stationarity bound") {
    auto b = inputs(0.5, 1.0, 10);
    CHECK(global_stationarity_bound(b, 0.0, 3.0) == doctest::Approx(3.0 * std::pow(0.5, 5.0)));
    double prev = 1e300;
    for (std::size_t depth = 1; depth < 40; ++depth) {
        b.depth = depth;
        const double cur = global_stationarity_bound(b, 0.0);
        CHECK(cur < prev);
        prev = cur;
    }
    b.depth = 10;
    CHECK(global_stationarity_bound(b, 0.2) < global_stationarity_bound(b, 0.3));
    b.alpha = 0.3;
    CHECK_THROWS_AS(global_stationarity_bound(b, 0.0), ContractViolation);
}

TEST_CASE("stationary-output condition report") {
    auto b = inputs(0.5, 1.0, 10);
    Thm41Params params;
    params.delta = 0.1;
    params.d_f = 1.0;
    const auto r = thm41_condition_report(b, params, Thm41Case::lower_bounded_output);
    CHECK(r.applicable);
    CHECK(r.min_depth == 7);
    CHECK(std::ceil(std::log(10.0) / (0.5 * std::log(2.0))) == 7.0);
    CHECK_FALSE(r.conditions.empty());
    for (const auto& c : r.conditions) CHECK(c.satisfied == (c.relation == ">=" ? c.lhs >= c.rhs : c.lhs <= c.rhs));

    b.depth = 6;
    CHECK_FALSE(thm41_condition_report(b, params, Thm41Case::lower_bounded_output).all_satisfied);

    b.alpha = alpha_threshold(2) + 0.01;
    CHECK_FALSE(thm41_condition_report(b, params, Thm41Case::balanced_regression).applicable);

    b.alpha = 0.4;
    b.q = 1;
    const auto cls = thm41_condition_report(b, params, Thm41Case::balanced_classification);
    CHECK_FALSE(cls.applicable);
    CHECK_FALSE(cls.reason.empty());

    for (auto c : {Thm41Case::lower_bounded_output, Thm41Case::balanced_regression,
                   Thm41Case::balanced_classification})
        CHECK(parse_thm41_case(to_string(c)) == c);
    CHECK_THROWS_AS(parse_thm41_case("other"), ContractViolation);
}

TEST_CASE("bound inputs from an instance") {
    SmallInstanceParams params;
    params.seed = 5;
    const auto inst = random_small_instance(params);
    const auto b = BoundInputs::from_instance(inst.model, inst.x0, inst.labels);
    CHECK(b.lambda == inst.model.propagation()->lambda());
    CHECK(b.s == inst.model.max_spectral_norm());
    CHECK(b.d_x == doctest::Approx(max_row_norm(inst.x0)));
    CHECK(b.d_rho == 0.25);
    CHECK(b.q == 2);
    CHECK(b.n == static_cast<double>(params.n));
    CHECK(b.to_json().contains("lambda"));

    const GnnModel relu(inst.model.weights(), Activation(ActivationKind::relu), inst.model.propagation());
    CHECK_THROWS_AS(BoundInputs::from_instance(relu, inst.x0, inst.labels), ContractViolation);
    const GnnModel mlp(inst.model.weights(), inst.model.activation(), nullptr);
    CHECK_THROWS_AS(BoundInputs::from_instance(mlp, inst.x0, inst.labels), ContractViolation);
}

TEST_CASE("measured energies stay below both smoothing bounds") {
    CsbmParams params;
    params.n = 200;
    const auto sample = csbm_generate(params, 2);
    auto prop = std::make_shared<const PropagationMatrix>(build_propagation(sample.graph));
    const std::size_t n = sample.graph.node_count();
    for (auto task : {TaskKind::regression, TaskKind::classification}) {
        InitConfig init;
        init.seed = 2;
        init.target_spectral_norm = 1.0;
        const std::size_t out = task == TaskKind::regression ? 1 : 2;
        const GnnModel model(init_weights(constant_width_dims(params.dim, 8, out, 30), init),
                             Activation(ActivationKind::centered_softplus), prop);
        LabelSet labels = task == TaskKind::regression ? LabelSet::regression(rademacher_column(n, 2, 4))
                                                       : LabelSet::classification(sample.labels, 2);
        const auto records = evaluate_instance_bounds(model, sample.features, labels);
        std::size_t forward_checked = 0, backward_checked = 0;
        for (const auto& r : records) {
            if (r.theorem == "forward-smoothing") ++forward_checked;
            if (r.theorem == "backward-smoothing") ++backward_checked;
            if ((r.theorem == "forward-smoothing" || r.theorem == "backward-smoothing") && r.satisfied)
                CHECK(*r.satisfied);
        }
        CHECK(forward_checked == 31);
        CHECK(backward_checked == 31);

        const auto trace = forward(model, sample.features);
        const auto bt = backward(model, trace, labels);
        const auto b = BoundInputs::from_instance(model, sample.features, labels);
        for (std::size_t k = 0; k <= 30; ++k) CHECK(energy(bt.b[k]) <= backward_bound(b, k));
    }
}

TEST_CASE("constant-gradient construction sits trivially below the backward bound") {
    const auto inst = constant_gradient_gnn(20, 6);
    const auto bt = backward(inst.model, forward(inst.model, inst.x0), inst.labels);
    BoundInputs b = BoundInputs::from_instance(inst.model, inst.x0, inst.labels);
    for (std::size_t k = 0; k <= 6; ++k) CHECK(energy(bt.b[k]) <= backward_bound(b, k));
}

TEST_CASE("bound records serialize") {
    BoundRecord r{"forward-smoothing", {{"k", 1}}, 0.5, 0.25, true, ""};
    const auto j = to_json(r);
    CHECK(j["theorem"] == "forward-smoothing");
    CHECK(j["bound"] == 0.5);
    CHECK(j["satisfied"] == true);
    BoundRecord skipped{"backward-rate", {}, std::nullopt, 0.1, std::nullopt, "outside regime"};
    CHECK(to_json(skipped)["bound"].is_null());
    CHECK(to_json(std::vector<BoundRecord>{r, skipped}).size() == 2);
}
