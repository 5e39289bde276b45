// End-to-end checks of the pfmix binary: determinism, exit codes, output
// shapes. Each case shells out to the real executable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("pfmix_cli_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(PFMIX_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    int n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("simulate is byte-identical across runs with the same seed") {
    TempDir dir;
    const std::string a = (dir.path / "a").string();
    const std::string b = (dir.path / "b").string();
    REQUIRE(run("simulate --design fixture-q2k3 --n 200 --seed 1 --out " + a) == 0);
    REQUIRE(run("simulate --design fixture-q2k3 --n 200 --seed 1 --out " + b) == 0);
    CHECK(slurp(fs::path(a) / "counts.csv") == slurp(fs::path(b) / "counts.csv"));
    CHECK(slurp(fs::path(a) / "true_labels.csv") == slurp(fs::path(b) / "true_labels.csv"));
    CHECK(slurp(fs::path(a) / "theta_true.txt") == slurp(fs::path(b) / "theta_true.txt"));

    const std::string c = (dir.path / "c").string();
    REQUIRE(run("simulate --design fixture-q2k3 --n 200 --seed 2 --out " + c) == 0);
    CHECK(slurp(fs::path(a) / "counts.csv") != slurp(fs::path(c) / "counts.csv"));
}

TEST_CASE("fit rejects q above the Ledermann bound with exit 1") {
    TempDir dir;
    const std::string sim = (dir.path / "sim").string();
    REQUIRE(run("simulate --design generated --n 60 --p 4 --q 1 --k 1 --seed 3 --out " + sim) ==
            0);
    // p=4 gives a Ledermann bound of 1
    CHECK(run("fit --counts " + sim + "/counts.csv -q 2 -k 1 --out " + (dir.path / "f").string()) ==
          1);
}

TEST_CASE("select writes one row per grid cell") {
    TempDir dir;
    const std::string sim = (dir.path / "sim").string();
    REQUIRE(run("simulate --design generated --n 120 --p 7 --q 1 --k 2 --seed 5 --out " + sim) ==
            0);
    const std::string table = (dir.path / "sel.csv").string();
    REQUIRE(run("select --counts " + sim + "/counts.csv --q 1,2 --k 1..5 --seeds 1 "
                "--criterion aic --epsilon 1e-3 --max-iter 40 --out " +
                table) == 0);
    CHECK(count_lines(table) == 11);  // header + 10 cells
}

TEST_CASE("fit, scores, rotate and check chain on a small dataset") {
    TempDir dir;
    const std::string sim = (dir.path / "sim").string();
    REQUIRE(run("simulate --design generated --n 150 --p 7 --q 2 --k 2 --seed 7 --out " + sim) ==
            0);
    const std::string fit = (dir.path / "fit").string();
    REQUIRE(run("fit --counts " + sim + "/counts.csv -q 2 -k 2 --epsilon 1e-4 --max-iter 80 "
                "--out " +
                fit) == 0);
    CHECK(fs::exists(fs::path(fit) / "params.txt"));

    REQUIRE(run("scores --params " + fit + "/params.txt --counts " + sim +
                "/counts.csv --out " + (dir.path / "scores.csv").string()) == 0);
    CHECK(count_lines(dir.path / "scores.csv") == 151);

    REQUIRE(run("rotate --loadings " + fit + "/loadings.csv --threshold 0.2 --out " +
                (dir.path / "rot").string()) == 0);
    CHECK(fs::exists(dir.path / "rot" / "rotated_loadings.csv"));
    CHECK(fs::exists(dir.path / "rot" / "factor_correlation.csv"));

    REQUIRE(run("check --params " + fit + "/params.txt") == 0);
}

TEST_CASE("unknown subcommands and missing files fail cleanly") {
    CHECK(run("frobnicate") != 0);
    CHECK(run("fit --counts /nonexistent.csv -q 1 -k 1") == 1);
}
