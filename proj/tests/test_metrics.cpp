#include <doctest.h>

#include <cmath>

#include "smoothlab/backprop.hpp"
#include "smoothlab/constructions.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/metrics.hpp"
#include "test_support.hpp"

using namespace smoothlab;

TEST_CASE("energy closed forms") {
    Matrix constant(5, 3);
    for (std::size_t i = 0; i < 5; ++i) constant(i, 0) = 2.0, constant(i, 1) = -1.0, constant(i, 2) = 7.0;
    CHECK(energy(constant) == 0.0);
    CHECK(energy(Matrix::from_rows({{1, 0}, {0, 0}})) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(energy(Matrix(1, 4, 3.0)) == 0.0);
}

TEST_CASE("energy equals the pairwise double sum") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t n = 1 + seed % 50;
        const auto x = testing::random_matrix(n, 1 + seed % 5, seed, 1.0 + static_cast<double>(seed % 7));
        CHECK(std::abs(energy(x) - testing::pairwise_energy(x)) <= 1e-10);
    }
}

TEST_CASE("energy homogeneity and shift invariance") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = testing::random_matrix(12, 3, seed);
        const double e = energy(x);
        CHECK(energy(-2.5 * x) == doctest::Approx(2.5 * e).epsilon(1e-12));
        Matrix shifted = x;
        for (std::size_t i = 0; i < 12; ++i) shifted(i, 0) += 4.0, shifted(i, 2) -= 1.5;
        CHECK(energy(shifted) == doctest::Approx(e).epsilon(1e-12));
    }
}

TEST_CASE("energy contracts under weights and activations") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto x = testing::random_matrix(15, 4, seed, 3.0);
        const auto w = testing::random_matrix(4, 6, seed + 77);
        CHECK(energy(matmul(x, w)) <= energy(x) * spectral_norm(w) * (1 + 1e-10));
        for (auto kind : {ActivationKind::centered_softplus, ActivationKind::tanh, ActivationKind::relu})
            CHECK(energy(Activation(kind).apply(x)) <= energy(x) * (1 + 1e-12));
    }
}

TEST_CASE("epsilon_n") {
    CHECK(epsilon_n(Matrix::from_rows({{1, -2}, {-1, 2}})) == 0.0);
    CHECK(epsilon_n(Matrix::from_rows({{1, 0}, {2, 4}})) == doctest::Approx(5.0));
}

TEST_CASE("decay rate fits") {
    std::vector<double> geo;
    for (int k = 0; k <= 10; ++k) geo.push_back(2.0 * std::pow(0.5, k));
    const auto fit = fit_decay_rate(geo, 0, 10);
    CHECK(std::abs(fit.rate - 0.5) <= 1e-10);
    CHECK(std::abs(fit.r_squared - 1.0) <= 1e-10);
    CHECK(std::exp(fit.intercept) == doctest::Approx(2.0));

    const auto flat = fit_decay_rate(std::vector<double>(8, 3.0), 1, 6);
    CHECK(flat.rate == doctest::Approx(1.0));

    std::vector<double> with_zero = geo;
    with_zero[4] = 0.0;
    CHECK_THROWS_AS(fit_decay_rate(with_zero, 0, 10), ContractViolation);
    CHECK_THROWS_AS(fit_decay_rate(geo, 0, 2), ContractViolation);
    CHECK_THROWS_AS(fit_decay_rate(geo, 5, 11), ContractViolation);

    const auto autofit = fit_decay_rate_auto(geo);
    REQUIRE(autofit.has_value());
    CHECK(autofit->rate == doctest::Approx(0.5));
    CHECK_FALSE(fit_decay_rate_auto({1.0, 0.5, 0.25}).has_value());
}

TEST_CASE("fitted forward rate of an identity GNN respects lambda") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SmallInstanceParams params;
        params.n = 40;
        params.depth = 20;
        params.seed = seed;
        params.activation = ActivationKind::identity;
        auto inst = random_small_instance(params);
        for (std::size_t k = 0; k <= params.depth; ++k) {
            Matrix w = inst.model.weight(k);
            w *= 1.0 / spectral_norm(w);
            inst.model.set_weight(k, w);
        }
        const auto rep = profile(inst.model, inst.x0, inst.labels);
        REQUIRE(rep.forward_rate.has_value());
        CHECK(rep.forward_rate->rate <= inst.model.propagation()->lambda() + 0.05);
    }
}

TEST_CASE("profile of the constant-gradient construction") {
    const auto inst = constant_gradient_gnn(30, 12);
    const auto rep = profile(inst.model, inst.x0, inst.labels);
    REQUIRE(rep.forward_energy.size() == 13);
    for (std::size_t k = 0; k <= 12; ++k) {
        CHECK(rep.forward_energy[k] < 1e-14);
        CHECK(rep.backward_energy[k] < 1e-14);
        CHECK(rep.grad_norms[k] == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(rep.spectral_norms[k] == 1.0);
    }
    CHECK(rep.loss == doctest::Approx(0.5));
    CHECK(rep.epsilon_n == doctest::Approx(1.0));
}

TEST_CASE("profile formats") {
    const auto inst = constant_gradient_gnn(6, 2);
    const auto rep = profile(inst.model, inst.x0, inst.labels);
    const auto csv = format_profile_csv(rep);
    CHECK(csv.rfind("k,forward_energy,backward_energy,grad_norm,spectral_norm\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    const auto json = format_profile_json(rep);
    CHECK(json.find("\"grad_norms\"") != std::string::npos);
}

TEST_CASE("stationarity") {
    BackwardTrace zero{{Matrix(3, 1)}, {Matrix(2, 1), Matrix(1, 1)}};
    const auto z = stationarity(zero, 1e-12);
    CHECK(z.global);
    CHECK(z.max_grad_norm == 0.0);

    const auto inst = constant_gradient_gnn(20, 5);
    const auto bt = backward(inst.model, forward(inst.model, inst.x0), inst.labels);
    const auto r = stationarity(bt, 0.5);
    CHECK_FALSE(r.global);
    CHECK(r.max_grad_norm == doctest::Approx(1.0));
    for (bool flag : r.per_layer) CHECK_FALSE(flag);
    CHECK(stationarity(bt, 1.5).global);
    CHECK_THROWS_AS(stationarity(bt, 0.0), ContractViolation);
}
