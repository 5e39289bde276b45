#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "pfm/errors.hpp"
#include "pfm/model.hpp"
#include "pfm/rng.hpp"
#include "pfm/simulation.hpp"

using namespace pfm;

TEST_CASE("link_rates") {
    SUBCASE("zero loadings ignore z") {
        Loadings l = Loadings::zeros(2, 1);
        l.intercepts << 0.0, std::log(2.0);
        Eigen::VectorXd z(1);
        z << 17.3;
        const Eigen::VectorXd rates = link_rates(l, z);
        CHECK(rates(0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(rates(1) == doctest::Approx(2.0).epsilon(1e-15));
    }

    SUBCASE("unit loading") {
        Loadings l = Loadings::zeros(1, 1);
        l.loadings << 1.0;
        l.fixed_mask.setConstant(false);
        Eigen::VectorXd z(1);
        z << 1.0;
        CHECK(link_rates(l, z)(0) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
    }

    SUBCASE("recovery-table row 2 arithmetic") {
        Loadings l = Loadings::zeros(1, 2);
        l.intercepts << 0.62;
        l.loadings << 0.75, -0.49;
        l.fixed_mask.setConstant(false);
        Eigen::VectorXd z(2);
        z << 1.0, 1.0;
        CHECK(link_rates(l, z)(0) == doctest::Approx(std::exp(0.88)).epsilon(1e-12));
    }

    SUBCASE("overflow errors identify the variable") {
        Loadings l = Loadings::zeros(2, 1);
        l.intercepts << 0.0, 800.0;
        l.fixed_mask.setConstant(false);
        Eigen::VectorXd z(1);
        z << 0.0;
        try {
            link_rates(l, z);
            FAIL("expected numerical_error");
        } catch (const numerical_error& e) {
            CHECK(std::string(e.what()).find("variable 1") != std::string::npos);
        }
    }
}

TEST_CASE("poisson_row_loglik") {
    Eigen::VectorXi y(1);
    Eigen::VectorXd rates(1);

    y << 0;
    rates << 1.0;
    CHECK(poisson_row_loglik(y, rates) == doctest::Approx(-1.0).epsilon(1e-15));

    y << 2;
    rates << 2.0;
    CHECK(poisson_row_loglik(y, rates) == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-12));

    Eigen::VectorXi y3 = Eigen::VectorXi::Zero(3);
    Eigen::VectorXd r3 = Eigen::VectorXd::Ones(3);
    CHECK(poisson_row_loglik(y3, r3) == doctest::Approx(-3.0).epsilon(1e-15));
}

TEST_CASE("component marginal with zero loadings collapses to the Poisson likelihood") {
    Theta theta = test::random_theta(5, 2, 2, 11);
    theta.loadings.loadings.setZero();
    const auto grid = tensor_grid(gauss_hermite_rule(8), 2);
    Rng rng(5);
    Eigen::VectorXi y(5);
    for (int j = 0; j < 5; ++j) y(j) = rng.poisson(1.5);
    const Eigen::VectorXd rates = theta.loadings.intercepts.array().exp();
    const double expect = poisson_row_loglik(y, rates);
    for (int i = 0; i < 2; ++i) {
        CHECK(component_marginal_loglik(y, i, theta, grid) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("component marginal matches a dense-grid oracle (q=1)") {
    Theta theta;
    theta.dims = {10, 1, 1, 1, 0};
    theta.loadings = Loadings::zeros(1, 1);
    theta.loadings.loadings(0, 0) = 1.0;
    theta.mixture.weights = Eigen::VectorXd::Ones(1);
    theta.mixture.means = {Eigen::VectorXd::Zero(1)};
    theta.mixture.covs = {Eigen::MatrixXd::Identity(1, 1)};

    Eigen::VectorXi y(1);
    y << 0;
    const auto grid = tensor_grid(gauss_hermite_rule(20), 1);
    const double got = component_marginal_loglik(y, 0, theta, grid);
    const double oracle = test::dense_marginal_oracle(y, theta.loadings.intercepts,
                                                      theta.loadings.loadings.col(0), 0.0, 1.0);
    CHECK(got == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("quadrature refinement is monotone on random instances") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Theta theta = test::random_theta(3, 1, 1, 100 + trial);
        Eigen::VectorXi y(3);
        for (int j = 0; j < 3; ++j) y(j) = rng.poisson(2.0);
        const auto value = [&](int T) {
            return component_marginal_loglik(y, 0, theta, tensor_grid(gauss_hermite_rule(T), 1));
        };
        const double v32 = value(32);
        CHECK(std::abs(value(16) - v32) <= std::abs(value(4) - v32) + 1e-12);
    }
}

TEST_CASE("component marginal is invariant under joint coordinate permutation") {
    Theta theta = test::random_theta(5, 2, 2, 3);
    Rng rng(9);
    Eigen::VectorXi y(5);
    for (int j = 0; j < 5; ++j) y(j) = rng.poisson(2.0);
    const auto grid = tensor_grid(gauss_hermite_rule(8), 2);
    const double base = component_marginal_loglik(y, 0, theta, grid);

    std::vector<int> perm{3, 0, 4, 1, 2};
    Theta permuted = theta;
    Eigen::VectorXi y2(5);
    for (int j = 0; j < 5; ++j) {
        y2(j) = y(perm[j]);
        permuted.loadings.intercepts(j) = theta.loadings.intercepts(perm[j]);
        permuted.loadings.loadings.row(j) = theta.loadings.loadings.row(perm[j]);
    }
    permuted.loadings.fixed_mask.setConstant(false);  // pattern no longer structural
    CHECK(component_marginal_loglik(y2, 0, permuted, grid) ==
          doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("observed loglik properties") {
    const auto grid = tensor_grid(gauss_hermite_rule(8), 2);

    SUBCASE("k=1 reduces to the component marginal sum") {
        Theta theta = test::random_theta(5, 2, 1, 17);
        const SimulatedDataset data = simulate_dataset(theta, 40, 99);
        double manual = 0.0;
        for (int l = 0; l < 40; ++l) {
            manual += component_marginal_loglik(data.counts.values.row(l).transpose(), 0, theta,
                                                grid);
        }
        CHECK(observed_loglik(data.counts, theta, grid) ==
              doctest::Approx(manual).epsilon(1e-12));
    }

    SUBCASE("duplicated rows double the loglik exactly") {
        Theta theta = test::random_theta(5, 2, 2, 21);
        const SimulatedDataset data = simulate_dataset(theta, 25, 7);
        CountMatrix doubled;
        doubled.values.resize(50, 5);
        doubled.values.topRows(25) = data.counts.values;
        doubled.values.bottomRows(25) = data.counts.values;
        CHECK(observed_loglik(doubled, theta, grid) ==
              doctest::Approx(2.0 * observed_loglik(data.counts, theta, grid)).epsilon(1e-12));
    }

    SUBCASE("invariant under component label permutation") {
        Theta theta = test::random_theta(5, 2, 3, 31);
        const SimulatedDataset data = simulate_dataset(theta, 30, 8);
        Theta shuffled = theta;
        const std::vector<int> perm{2, 0, 1};
        for (int i = 0; i < 3; ++i) {
            shuffled.mixture.weights(i) = theta.mixture.weights(perm[i]);
            shuffled.mixture.means[i] = theta.mixture.means[perm[i]];
            shuffled.mixture.covs[i] = theta.mixture.covs[perm[i]];
        }
        CHECK(observed_loglik(data.counts, shuffled, grid) ==
              doctest::Approx(observed_loglik(data.counts, theta, grid)).epsilon(1e-10));
    }

    SUBCASE("zero loadings give the closed-form independent-Poisson loglik") {
        Theta theta = test::random_theta(5, 2, 2, 41);
        theta.loadings.loadings.setZero();
        const SimulatedDataset data = simulate_dataset(theta, 30, 13);
        const Eigen::VectorXd rates = theta.loadings.intercepts.array().exp();
        double expect = 0.0;
        for (int l = 0; l < 30; ++l) {
            expect += poisson_row_loglik(data.counts.values.row(l).transpose(), rates);
        }
        CHECK(observed_loglik(data.counts, theta, grid) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("likelihood is invariant under triangular latent reparameterization") {
    // z' = A^{-T} z with Lambda -> Lambda A^T, mu -> A^{-T} mu,
    // Sigma -> A^{-T} Sigma A^{-1}; triangular A keeps the quadrature nodes
    // aligned so the identity is exact at T=8.
    Rng rng(77);
    const auto grid = tensor_grid(gauss_hermite_rule(8), 2);
    for (int trial = 0; trial < 4; ++trial) {
        Theta theta = test::random_theta(5, 2, 2, 300 + trial);
        const SimulatedDataset data = simulate_dataset(theta, 25, 1000 + trial);
        const double base = observed_loglik(data.counts, theta, grid);

        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
        a(0, 0) = rng.uniform(0.5, 2.0);
        a(1, 1) = rng.uniform(0.5, 2.0);
        a(0, 1) = rng.uniform(-0.8, 0.8);  // A upper-triangular => A^{-T} lower
        Theta mapped = theta;
        mapped.loadings.loadings = theta.loadings.loadings * a.transpose();
        mapped.loadings.fixed_mask.setConstant(false);
        const Eigen::MatrixXd ait = a.transpose().inverse();
        for (int i = 0; i < 2; ++i) {
            mapped.mixture.means[i] = ait * theta.mixture.means[i];
            mapped.mixture.covs[i] = ait * theta.mixture.covs[i] * ait.transpose();
        }
        CHECK(observed_loglik(data.counts, mapped, grid) ==
              doctest::Approx(base).epsilon(1e-8));
    }
}

TEST_CASE("check_identifiability") {
    Theta theta = test::random_theta(5, 2, 3, 55);

    SUBCASE("standardized theta passes") {
        CHECK(check_identifiability(theta, 1e-8).all_pass());
    }

    SUBCASE("first intercept violation is reported with its magnitude") {
        theta.loadings.intercepts(0) = 0.1;
        const auto report = check_identifiability(theta, 1e-8);
        CHECK_FALSE(report.first_intercept.pass);
        CHECK(report.first_intercept.magnitude == doctest::Approx(0.1));
        CHECK(report.mean_zero.pass);
    }

    SUBCASE("mean shift is weighted by the component weight") {
        theta.mixture.means[0](0) += 1.0;
        const auto report = check_identifiability(theta, 1e-8);
        CHECK_FALSE(report.mean_zero.pass);
        CHECK(report.mean_zero.magnitude ==
              doctest::Approx(theta.mixture.weights(0)).epsilon(1e-12));
    }
}

TEST_CASE("count matrix validation") {
    CountMatrix counts;
    counts.values.resize(2, 2);
    counts.values << 1, 2, 3, 4;
    CHECK_NOTHROW(counts.validate());
    counts.values(0, 0) = -1;
    CHECK_THROWS_AS(counts.validate(), data_error);
}
