#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "pfm/errors.hpp"
#include "pfm/io.hpp"

using namespace pfm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("pfm_io_test_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

}  // namespace

TEST_CASE("load_counts_csv") {
    TempDir dir;

    SUBCASE("canonical two-row file") {
        write_file(dir.path / "ok.csv",
                   "nORT,nREG,nMRC,nLES,nMFS,nCOE,nSIN\n1,0,2,3,0,1,4\n0,0,0,1,2,0,0\n");
        const CountMatrix counts = load_counts_csv(dir.path / "ok.csv");
        CHECK(counts.rows() == 2);
        CHECK(counts.cols() == 7);
        CHECK(counts.column_names[0] == "nORT");
        CHECK(counts.values(0, 6) == 4);
    }

    SUBCASE("negative cell is rejected with its location") {
        write_file(dir.path / "neg.csv", "a,b\n1,-1\n");
        try {
            load_counts_csv(dir.path / "neg.csv");
            FAIL("expected data_error");
        } catch (const data_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("row 2") != std::string::npos);
            CHECK(msg.find("'b'") != std::string::npos);
        }
    }

    SUBCASE("fractional cell is rejected") {
        write_file(dir.path / "frac.csv", "a,b\n1,2.5\n");
        CHECK_THROWS_AS(load_counts_csv(dir.path / "frac.csv"), data_error);
    }

    SUBCASE("missing cell is rejected") {
        write_file(dir.path / "short.csv", "a,b\n1\n");
        CHECK_THROWS_AS(load_counts_csv(dir.path / "short.csv"), data_error);
    }

    SUBCASE("empty file is rejected") {
        write_file(dir.path / "empty.csv", "");
        CHECK_THROWS_AS(load_counts_csv(dir.path / "empty.csv"), data_error);
    }

    SUBCASE("counts round-trip through write_counts_csv") {
        const auto data = simulate_dataset(fixture_q2k3(), 20, 4);
        CountMatrix named = data.counts;
        named.column_names = {"c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9", "c10"};
        write_counts_csv(named, dir.path / "rt.csv");
        const CountMatrix back = load_counts_csv(dir.path / "rt.csv");
        CHECK((back.values - named.values).cwiseAbs().maxCoeff() == 0);
        CHECK(back.column_names == named.column_names);
    }
}

TEST_CASE("theta files round-trip at full precision") {
    TempDir dir;
    Theta theta = test::random_theta(5, 2, 3, 77);
    theta.mixture.weights << 0.25, 0.35, 0.4;

    write_theta(theta, {"a", "b", "c", "d", "e"}, dir.path / "theta.txt");
    std::vector<std::string> names;
    const Theta back = read_theta(dir.path / "theta.txt", &names);

    CHECK(names == std::vector<std::string>{"a", "b", "c", "d", "e"});
    CHECK((back.loadings.intercepts - theta.loadings.intercepts).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.loadings.loadings - theta.loadings.loadings).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.mixture.weights - theta.mixture.weights).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 3; ++i) {
        CHECK((back.mixture.means[i] - theta.mixture.means[i]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.mixture.covs[i] - theta.mixture.covs[i]).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("eta rows survive when present") {
        theta.dims.m = 2;
        theta.mixture.eta = Eigen::MatrixXd::Zero(2, 3);
        theta.mixture.eta << 0.5, -1.25, 0.75, 2.0, 0.125, -0.375;
        write_theta(theta, {}, dir.path / "eta.txt");
        const Theta withEta = read_theta(dir.path / "eta.txt");
        CHECK((withEta.mixture.eta - theta.mixture.eta).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("covariate schema files") {
    TempDir dir;

    SUBCASE("paper preset round-trips") {
        const CovariateSchema schema = paper_covariate_schema();
        write_covariate_schema(schema, dir.path / "schema.txt");
        const CovariateSchema back = load_covariate_schema(dir.path / "schema.txt");
        REQUIRE(back.covariates.size() == schema.covariates.size());
        CHECK(back.encoded_columns() == 16);
        CHECK(back.covariates[7].midpoints == std::vector<double>{0.0, 2.5, 7.5, 15.0});
        CHECK(back.covariates[0].levels ==
              std::vector<std::string>{"Italy", "Mixed", "Abroad"});
    }

    SUBCASE("malformed schema lines are rejected") {
        write_file(dir.path / "bad.txt", "covariate x weird a,b\n");
        CHECK_THROWS_AS(load_covariate_schema(dir.path / "bad.txt"), data_error);
    }
}

TEST_CASE("covariate CSV honours the NA relabeling") {
    TempDir dir;
    CovariateSchema schema;
    schema.covariates = {{"social_class",
                          CovariateSpec::Kind::kCategorical,
                          {"Low", "Middle", "High", "NA"},
                          {}}};
    write_file(dir.path / "cov.csv", "social_class\nDon't know-don't answer\nMiddle\n");
    const DesignMatrix design = load_covariates_csv(dir.path / "cov.csv", schema);
    CHECK(design.values.rows() == 2);
    CHECK(design.values(0, 3) == 1.0);  // NA dummy
    CHECK(design.values(1, 1) == 1.0);  // Middle dummy
}

TEST_CASE("matrix csv round-trip") {
    TempDir dir;
    Eigen::MatrixXd m(2, 3);
    m << 1.5, -2.25, 1e-17, 3.0, 0.1, -0.7;
    write_matrix_csv(m, {"x", "y", "z"}, dir.path / "m.csv");
    std::vector<std::string> header;
    const Eigen::MatrixXd back = read_matrix_csv(dir.path / "m.csv", &header);
    CHECK(header == std::vector<std::string>{"x", "y", "z"});
    CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit artifacts have the documented shapes") {
    TempDir dir;
    Theta truth = test::random_theta(5, 1, 2, 17);
    const auto data = simulate_dataset(truth, 60, 18);
    FitConfig cfg;
    cfg.max_iter = 30;
    cfg.epsilon = 1e-4;
    const FitResult result = fit(data.counts, {60, 5, 1, 2, 0}, cfg);
    write_fit_result(result, {"a", "b", "c", "d", "e"}, dir.path / "fit");

    CHECK(fs::exists(dir.path / "fit" / "params.txt"));
    CHECK(fs::exists(dir.path / "fit" / "trace.csv"));
    CHECK(fs::exists(dir.path / "fit" / "criteria.csv"));
    CHECK(fs::exists(dir.path / "fit" / "identifiability.txt"));

    // scores.csv: q score columns + label + k responsibilities
    std::ifstream in(dir.path / "fit" / "scores.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "score1,label,resp1,resp2");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 60);

    const Theta back = read_theta(dir.path / "fit" / "params.txt");
    CHECK((back.loadings.loadings - result.theta.loadings.loadings).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("selection csv includes chosen flags") {
    TempDir dir;
    SelectionTable table;
    SelectionCell cell;
    cell.q = 1;
    cell.k = 2;
    cell.seed_count = 3;
    cell.usable = true;
    cell.best_loglik = -100.0;
    cell.h = 12;
    cell.aic = 224.0;
    cell.bic = 230.0;
    cell.converged_fraction = 1.0;
    table.cells = {cell};
    table.chosen_by_aic = 0;
    table.chosen_by_bic = 0;
    write_selection_csv(table, dir.path / "sel.csv");
    std::ifstream in(dir.path / "sel.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header.find("chosen_by_bic") != std::string::npos);
    CHECK(row.substr(0, 6) == "1,2,3,");
    CHECK(row.find(",1,1") != std::string::npos);
}
