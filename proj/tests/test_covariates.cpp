#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "pfm/covariates.hpp"
#include "pfm/errors.hpp"
#include "pfm/rng.hpp"
#include "pfm/simulation.hpp"

using namespace pfm;

TEST_CASE("mixture_weights_logit") {
    SUBCASE("zero coefficients give uniform weights") {
        const Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(3, 2);
        Eigen::VectorXd x(2);
        x << 1.0, 0.7;
        const Eigen::VectorXd w = mixture_weights_logit(eta, x);
        CHECK(w.size() == 4);
        for (int i = 0; i < 4; ++i) CHECK(w(i) == doctest::Approx(0.25).epsilon(1e-14));
    }

    SUBCASE("two components") {
        Eigen::MatrixXd eta(1, 2);
        Eigen::VectorXd x(2);
        x << 1.0, 1.0;
        eta << 0.5, -0.5;  // eta'x = 0
        Eigen::VectorXd w = mixture_weights_logit(eta, x);
        CHECK(w(0) == doctest::Approx(0.5).epsilon(1e-14));
        eta << std::log(3.0), 0.0;
        w = mixture_weights_logit(eta, x);
        CHECK(w(0) == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(w(1) == doctest::Approx(0.25).epsilon(1e-12));
    }

    SUBCASE("weights always sum to one") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::MatrixXd eta(2, 3);
            Eigen::VectorXd x(3);
            x(0) = 1.0;
            for (int c = 0; c < 3; ++c) {
                eta(0, c) = rng.uniform(-8.0, 8.0);
                eta(1, c) = rng.uniform(-8.0, 8.0);
                if (c > 0) x(c) = rng.uniform(-3.0, 3.0);
            }
            CHECK(std::abs(mixture_weights_logit(eta, x).sum() - 1.0) < 1e-12);
        }
    }

    SUBCASE("affine shift of a covariate is absorbed by the intercepts") {
        Rng rng(6);
        Eigen::MatrixXd eta(2, 3);
        for (int i = 0; i < 2; ++i) {
            for (int c = 0; c < 3; ++c) eta(i, c) = rng.uniform(-2.0, 2.0);
        }
        const double shift = 1.7;
        Eigen::MatrixXd eta2 = eta;
        eta2.col(0) -= eta.col(2) * shift;  // compensate column-2 shift
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::VectorXd x(3);
            x << 1.0, rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
            Eigen::VectorXd xs = x;
            xs(2) += shift;
            const Eigen::VectorXd w = mixture_weights_logit(eta, x);
            const Eigen::VectorXd ws = mixture_weights_logit(eta2, xs);
            CHECK((w - ws).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("m_step_eta intercept-only closed form") {
    Theta theta = test::random_theta(4, 1, 3, 11);
    const auto data = simulate_dataset(theta, 60, 12);
    const auto s = e_step(data.counts, theta, tensor_grid(gauss_hermite_rule(6), 1));
    const Eigen::MatrixXd design = Eigen::MatrixXd::Ones(60, 1);
    const Eigen::MatrixXd eta = m_step_eta(s, design, Eigen::MatrixXd::Zero(2, 1));
    const Eigen::VectorXd rbar = s.responsibilities().colwise().mean();
    for (int i = 0; i < 2; ++i) {
        CHECK(eta(i, 0) == doctest::Approx(std::log(rbar(i) / rbar(2))).epsilon(1e-8));
    }
}

TEST_CASE("m_step_eta recovers the generating coefficients") {
    // responsibilities drawn exactly from a known eta
    Rng rng(21);
    const int n = 5000, k = 3, m = 2;
    Eigen::MatrixXd eta_true(k - 1, m + 1);
    eta_true << 0.8, -1.0, 0.5, -0.4, 0.6, -0.9;
    Eigen::MatrixXd design(n, m + 1);
    Eigen::MatrixXd resp(n, k);
    for (int l = 0; l < n; ++l) {
        design(l, 0) = 1.0;
        for (int c = 1; c <= m; ++c) design(l, c) = rng.normal();
        resp.row(l) = mixture_weights_logit(eta_true, design.row(l).transpose()).transpose();
    }
    EStepSummary s;
    s.log_resp = resp.array().log();
    const Eigen::MatrixXd eta = m_step_eta(s, design, Eigen::MatrixXd::Zero(k - 1, m + 1));
    CHECK((eta - eta_true).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("m_step_eta never decreases its objective and survives separation") {
    const int n = 40;
    Eigen::MatrixXd design(n, 2);
    EStepSummary s;
    s.log_resp.resize(n, 2);
    for (int l = 0; l < n; ++l) {
        design(l, 0) = 1.0;
        design(l, 1) = l < n / 2 ? -1.0 : 1.0;
        // perfectly separated hard responsibilities
        s.log_resp(l, 0) = l < n / 2 ? 0.0 : -1e30;
        s.log_resp(l, 1) = l < n / 2 ? -1e30 : 0.0;
    }
    const Eigen::MatrixXd eta = m_step_eta(s, design, Eigen::MatrixXd::Zero(1, 2));
    CHECK(eta.cwiseAbs().maxCoeff() <= 30.0 + 1e-12);  // capped, not divergent
    CHECK(eta(0, 1) < 0.0);
}

TEST_CASE("encode_covariates") {
    const CovariateSchema schema = paper_covariate_schema();

    SUBCASE("paper schema encodes 16 predictors plus the intercept") {
        CHECK(schema.encoded_columns() == 16);
        const CovariateRecords records{{"Italy", "Lyceum", "South", "Female", "Healthcare", "No",
                                        "Low", "None"}};
        const DesignMatrix design = encode_covariates(records, schema);
        CHECK(design.values.cols() == 17);
        CHECK(design.values(0, 0) == 1.0);
        CHECK(design.values.row(0).tail(16).cwiseAbs().maxCoeff() == 0.0);  // all references
    }

    SUBCASE("books-read midpoints") {
        const CovariateRecords records{
            {"Italy", "Lyceum", "South", "Female", "Healthcare", "No", "Low", "More than ten"},
            {"Italy", "Lyceum", "South", "Female", "Healthcare", "No", "Low",
             "Between five and ten"},
            {"Italy", "Lyceum", "South", "Female", "Healthcare", "No", "Low", "None"}};
        const DesignMatrix design = encode_covariates(records, schema);
        const int books = design.values.cols() - 1;  // last declared column
        CHECK(design.values(0, books) == 15.0);
        CHECK(design.values(1, books) == 7.5);
        CHECK(design.values(2, books) == 0.0);
    }

    SUBCASE("dummy positions follow the declared level order") {
        const CovariateRecords records{
            {"Mixed", "Lyceum", "South", "Female", "Healthcare", "No", "Low", "None"}};
        const DesignMatrix design = encode_covariates(records, schema);
        CHECK(design.values(0, 1) == 1.0);  // family_origin=Mixed
        CHECK(design.values(0, 2) == 0.0);  // family_origin=Abroad
    }

    SUBCASE("unknown category names row and column") {
        const CovariateRecords records{
            {"Italia", "Lyceum", "South", "Female", "Healthcare", "No", "Low", "None"}};
        try {
            encode_covariates(records, schema);
            FAIL("expected data_error");
        } catch (const data_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("row 1") != std::string::npos);
            CHECK(msg.find("family_origin") != std::string::npos);
            CHECK(msg.find("Italia") != std::string::npos);
        }
    }
}

TEST_CASE("intercept-only covariate fit matches the constant-weight fit") {
    Theta truth = test::random_theta(5, 1, 2, 31);
    truth.mixture.means[0](0) = -1.0;
    truth.mixture.means[1](0) = 1.0;
    truth.mixture.covs[0](0, 0) = 0.25;
    truth.mixture.covs[1](0, 0) = 0.25;
    const auto data = simulate_dataset(restandardize(truth), 250, 32);

    FitConfig cfg;
    cfg.max_iter = 150;
    const ModelDims dims{250, 5, 1, 2, 0};
    const FitResult base = fit(data.counts, dims, cfg);
    const Eigen::MatrixXd design = Eigen::MatrixXd::Ones(250, 1);
    const FitResult logit = fit(data.counts, dims, cfg, design);
    CHECK(std::abs(base.loglik - logit.loglik) <= 1e-6 * (std::abs(base.loglik) + 1.0));
    // the intercept-only weights reproduce the constant weights
    CHECK((base.theta.mixture.weights - logit.theta.mixture.weights).cwiseAbs().maxCoeff() <
          1e-6);
}
