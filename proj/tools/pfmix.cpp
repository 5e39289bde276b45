// pfmix: Poisson factor mixture toolkit for multivariate count data.
//
// Subcommands: fit, select, simulate, rotate, scores, check.
// Exit codes: 0 success, 1 data/configuration error, 2 numerical error.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pfm/covariates.hpp"
#include "pfm/errors.hpp"
#include "pfm/estimation.hpp"
#include "pfm/io.hpp"
#include "pfm/metrics.hpp"
#include "pfm/model.hpp"
#include "pfm/rotation.hpp"
#include "pfm/selection.hpp"
#include "pfm/simulation.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "pfmix 1.0.0";

struct CommonFitOptions {
    int quadrature_points = 8;
    int max_iter = 500;
    double epsilon = 1e-6;
    std::uint64_t seed = 1;
    std::string init = "classical-fa+ward";
    std::string lambda10 = "fixed";
    int threads = 1;
};

void add_fit_options(CLI::App* cmd, CommonFitOptions& opt, bool include_seed = true) {
    cmd->add_option("-T,--quadrature-points", opt.quadrature_points,
                    "Gauss-Hermite points per latent dimension")
        ->check(CLI::Range(1, 64));
    cmd->add_option("--max-iter", opt.max_iter, "EM iteration cap");
    cmd->add_option("--epsilon", opt.epsilon, "relative log-likelihood tolerance");
    if (include_seed) cmd->add_option("--seed", opt.seed, "random seed");
    cmd->add_option("--init", opt.init, "initialization strategy")
        ->check(CLI::IsMember({"classical-fa+ward", "random"}));
    cmd->add_option("--lambda10", opt.lambda10,
                    "first-intercept constraint handling")
        ->check(CLI::IsMember({"fixed", "free"}));
    cmd->add_option("--threads", opt.threads, "worker thread cap")->check(CLI::Range(1, 256));
}

pfm::FitConfig to_config(const CommonFitOptions& opt) {
    pfm::FitConfig cfg;
    cfg.quadrature_points = opt.quadrature_points;
    cfg.max_iter = opt.max_iter;
    cfg.epsilon = opt.epsilon;
    cfg.seed = opt.seed;
    cfg.init = opt.init == "random" ? pfm::InitStrategy::kRandom
                                    : pfm::InitStrategy::kClassicalFaWard;
    cfg.lambda10 = opt.lambda10 == "free" ? pfm::Lambda10Policy::kFree
                                          : pfm::Lambda10Policy::kFixed;
    return cfg;
}

/// Parses "1,2,5" and "1..4" style range lists.
std::vector<int> parse_range_list(const std::string& text) {
    std::vector<int> values;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        const auto dots = item.find("..");
        if (dots != std::string::npos) {
            const int lo = std::stoi(item.substr(0, dots));
            const int hi = std::stoi(item.substr(dots + 2));
            for (int v = lo; v <= hi; ++v) values.push_back(v);
        } else if (!item.empty()) {
            values.push_back(std::stoi(item));
        }
    }
    if (values.empty()) throw pfm::config_error("empty range list: '" + text + "'");
    return values;
}

std::optional<Eigen::MatrixXd> load_design(const std::string& covariates_path,
                                           const std::string& schema_path) {
    if (covariates_path.empty()) return std::nullopt;
    const pfm::CovariateSchema schema = schema_path.empty()
                                            ? pfm::paper_covariate_schema()
                                            : pfm::load_covariate_schema(schema_path);
    return pfm::load_covariates_csv(covariates_path, schema).values;
}

std::vector<std::pair<std::string, std::string>> base_manifest(const std::string& command,
                                                               std::uint64_t seed) {
    const auto now = std::chrono::system_clock::now();
    const auto stamp = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
    return {{"version", kVersion},
            {"command", command},
            {"seed", std::to_string(seed)},
            {"unix_time", std::to_string(stamp.count())}};
}

int run_fit(const std::string& counts_path, const std::string& covariates_path,
            const std::string& schema_path, int q, int k, const CommonFitOptions& opt,
            const std::string& out_dir) {
    const pfm::CountMatrix counts = pfm::load_counts_csv(counts_path);
    const auto design = load_design(covariates_path, schema_path);
    const int m = design ? static_cast<int>(design->cols()) - 1 : 0;
    const int qmax = pfm::ledermann_max_q(counts.cols());
    if (q > qmax) {
        throw pfm::config_error("q=" + std::to_string(q) + " exceeds the Ledermann bound " +
                                std::to_string(qmax) + " for p=" +
                                std::to_string(counts.cols()));
    }
    const pfm::ModelDims dims{counts.rows(), counts.cols(), q, k, m};
    auto manifest = base_manifest("fit", opt.seed);
    const auto start = std::chrono::steady_clock::now();
    const pfm::FitResult result = pfm::fit(counts, dims, to_config(opt), design);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);

    pfm::write_fit_result(result, counts.column_names, out_dir);
    manifest.emplace_back("counts", counts_path);
    manifest.emplace_back("q", std::to_string(q));
    manifest.emplace_back("k", std::to_string(k));
    manifest.emplace_back("m", std::to_string(m));
    manifest.emplace_back("epsilon", std::to_string(opt.epsilon));
    manifest.emplace_back("quadrature_points", std::to_string(opt.quadrature_points));
    manifest.emplace_back("init", opt.init);
    manifest.emplace_back("converged", result.converged ? "true" : "false");
    manifest.emplace_back("iterations", std::to_string(result.iterations));
    manifest.emplace_back("seconds", std::to_string(elapsed.count()));
    pfm::write_manifest(manifest, fs::path(out_dir) / "manifest.txt");

    std::cout << "loglik " << result.loglik << "  aic " << result.aic << "  bic " << result.bic
              << "  iterations " << result.iterations
              << (result.converged ? "" : "  (not converged)") << "\n";
    return 0;
}

int run_select(const std::string& counts_path, const std::string& covariates_path,
               const std::string& schema_path, const std::string& q_list,
               const std::string& k_list, int seeds, const CommonFitOptions& opt,
               const std::string& criterion, const std::string& out_path) {
    const pfm::CountMatrix counts = pfm::load_counts_csv(counts_path);
    const auto design = load_design(covariates_path, schema_path);
    const auto q_range = parse_range_list(q_list);
    const auto k_range = parse_range_list(k_list);
    const pfm::SelectionTable table =
        pfm::grid_search(counts, q_range, k_range, seeds, to_config(opt), design, opt.threads);
    pfm::write_selection_csv(table, out_path);

    const pfm::SelectionCell* chosen =
        criterion == "aic" ? table.aic_choice() : table.bic_choice();
    if (chosen) {
        std::cout << "chosen by " << criterion << ": q=" << chosen->q << " k=" << chosen->k
                  << "  (" << criterion << " "
                  << (criterion == "aic" ? chosen->aic : chosen->bic) << ")\n";
    }
    auto manifest = base_manifest("select", opt.seed);
    manifest.emplace_back("counts", counts_path);
    manifest.emplace_back("q_range", q_list);
    manifest.emplace_back("k_range", k_list);
    manifest.emplace_back("seeds_per_cell", std::to_string(seeds));
    const fs::path parent = fs::path(out_path).has_parent_path()
                                ? fs::path(out_path).parent_path()
                                : fs::path(".");
    pfm::write_manifest(manifest, parent / "select_manifest.txt");
    return 0;
}

int run_simulate(const std::string& design_name, int n, int p, int q, int k, double separation,
                 std::uint64_t seed, std::uint64_t loading_seed, const std::string& out_dir) {
    pfm::SimulationDesign design;
    design.dims = {n, p, q, k, 0};
    design.loading_seed = loading_seed;
    design.between_fraction = separation;
    design.master_seed = seed;
    if (design_name == "fixture-q2k3") {
        design.source = pfm::ThetaSource::kFixtureQ2K3;
        design.dims.p = 10;
        design.dims.q = 2;
        design.dims.k = 3;
    } else {
        design.source = pfm::ThetaSource::kGenerated;
    }
    const pfm::Theta theta = design.make_theta();
    pfm::SimulatedDataset data = pfm::simulate_dataset(theta, n, seed);
    if (data.counts.cols() == 7) {
        data.counts.column_names = pfm::canonical_count_columns();
    } else {
        for (int j = 0; j < data.counts.cols(); ++j) {
            data.counts.column_names.push_back("v" + std::to_string(j + 1));
        }
    }

    fs::create_directories(out_dir);
    pfm::write_counts_csv(data.counts, fs::path(out_dir) / "counts.csv");
    pfm::write_theta(theta, data.counts.column_names, fs::path(out_dir) / "theta_true.txt");
    {
        Eigen::MatrixXd labels(n, 1);
        for (int l = 0; l < n; ++l) labels(l, 0) = data.true_labels[l] + 1;
        pfm::write_matrix_csv(labels, {"label"}, fs::path(out_dir) / "true_labels.csv");
    }
    {
        std::vector<std::string> header;
        for (int c = 0; c < theta.dims.q; ++c) header.push_back("z" + std::to_string(c + 1));
        pfm::write_matrix_csv(data.true_scores, header, fs::path(out_dir) / "true_scores.csv");
    }
    auto manifest = base_manifest("simulate", seed);
    manifest.emplace_back("design", design_name);
    manifest.emplace_back("n", std::to_string(n));
    manifest.emplace_back("p", std::to_string(theta.dims.p));
    manifest.emplace_back("q", std::to_string(theta.dims.q));
    manifest.emplace_back("k", std::to_string(theta.dims.k));
    manifest.emplace_back("loading_seed", std::to_string(loading_seed));
    manifest.emplace_back("separation", std::to_string(separation));
    if (data.frequency_warning) manifest.emplace_back("frequency_warning", "true");
    pfm::write_manifest(manifest, fs::path(out_dir) / "manifest.txt");
    std::cout << "wrote " << n << " rows to " << out_dir << "\n";
    return 0;
}

int run_replicate_study(const std::string& design_name, int n, int p, int q, int k,
                        double separation, int replicates, int seeds, std::uint64_t seed,
                        std::uint64_t loading_seed, const std::string& mode,
                        const std::string& q_list, const std::string& k_list,
                        const CommonFitOptions& opt, const std::string& out_dir) {
    pfm::SimulationDesign design;
    design.dims = {n, p, q, k, 0};
    design.source = design_name == "fixture-q2k3" ? pfm::ThetaSource::kFixtureQ2K3
                                                  : pfm::ThetaSource::kGenerated;
    if (design.source == pfm::ThetaSource::kFixtureQ2K3) {
        design.dims.p = 10;
        design.dims.q = 2;
        design.dims.k = 3;
    }
    design.between_fraction = separation;
    design.loading_seed = loading_seed;
    design.master_seed = seed;
    design.replicates = replicates;
    design.seeds_per_replicate = seeds;
    fs::create_directories(out_dir);

    if (mode == "metrics") {
        const pfm::MetricsSummary summary =
            pfm::run_metric_replicates(design, to_config(opt), opt.threads);
        std::ofstream rows(fs::path(out_dir) / "replicates.csv");
        rows << "replicate,usable,ari,misclassification,loglik,iterations,converged\n";
        for (const auto& r : summary.replicates) {
            rows << r.replicate << ',' << r.usable << ',' << r.ari << ','
                 << r.misclassification << ',' << r.loglik << ',' << r.iterations << ','
                 << r.converged << '\n';
        }
        std::ofstream out(fs::path(out_dir) / "summary.csv");
        out << "metric,median,q1,q3\n";
        if (summary.ari_defined) {
            out << "ari," << summary.median_ari << ',' << summary.q1_ari << ','
                << summary.q3_ari << '\n';
            out << "misclassification," << summary.median_misclassification << ','
                << summary.q1_misclassification << ',' << summary.q3_misclassification << '\n';
        } else {
            out << "ari,NA,NA,NA\nmisclassification,NA,NA,NA\n";
        }
        pfm::write_matrix_csv(summary.loading_mean, {}, fs::path(out_dir) / "loading_mean.csv");
        pfm::write_matrix_csv(summary.loading_sd, {}, fs::path(out_dir) / "loading_sd.csv");
        if (summary.ari_defined) {
            std::cout << "median aRI " << summary.median_ari << "  median misclassification "
                      << summary.median_misclassification << "\n";
        } else {
            std::cout << "single-component design: clustering metrics not applicable\n";
        }
    } else {
        const auto q_range = parse_range_list(q_list);
        const auto k_range = parse_range_list(k_list);
        const pfm::SelectionSummary summary = pfm::run_selection_replicates(
            design, q_range, k_range, seeds, to_config(opt), opt.threads);
        std::ofstream out(fs::path(out_dir) / "selection_frequencies.csv");
        out << "criterion,k";
        for (int qv : q_range) out << ",q" << qv;
        out << '\n';
        for (std::size_t r = 0; r < k_range.size(); ++r) {
            out << "bic," << k_range[r];
            for (std::size_t c = 0; c < q_range.size(); ++c) {
                out << ',' << summary.bic_frequency(r, c);
            }
            out << '\n';
        }
        for (std::size_t r = 0; r < k_range.size(); ++r) {
            out << "aic," << k_range[r];
            for (std::size_t c = 0; c < q_range.size(); ++c) {
                out << ',' << summary.aic_frequency(r, c);
            }
            out << '\n';
        }
        std::cout << "selection frequencies written to " << out_dir << "\n";
    }
    auto manifest = base_manifest("simulate --replicates", seed);
    manifest.emplace_back("design", design_name);
    manifest.emplace_back("replicates", std::to_string(replicates));
    manifest.emplace_back("seeds_per_replicate", std::to_string(seeds));
    manifest.emplace_back("mode", mode);
    pfm::write_manifest(manifest, fs::path(out_dir) / "manifest.txt");
    return 0;
}

int run_rotate(const std::string& loadings_path, double gamma, double threshold,
               std::uint64_t seed, const std::string& out_dir) {
    Eigen::MatrixXd table;
    std::vector<std::string> row_names;
    // accept a parameter file, the loadings.csv written by fit (leading
    // variable-name column), or a plain numeric CSV
    bool parsed = false;
    try {
        std::vector<std::string> columns;
        const pfm::Theta theta = pfm::read_theta(loadings_path, &columns);
        table = theta.loadings.loadings;
        row_names = columns;
        parsed = true;
    } catch (const pfm::data_error&) {
    }
    if (!parsed) {
        std::ifstream in(loadings_path);
        if (!in) throw pfm::data_error("cannot open file: " + loadings_path);
        std::string line;
        std::getline(in, line);
        if (line.rfind("variable", 0) == 0) {
            std::vector<std::vector<double>> rows;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::istringstream ls(line);
                std::string cell;
                std::getline(ls, cell, ',');
                row_names.push_back(cell);
                std::vector<double> row;
                while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
                rows.push_back(std::move(row));
            }
            if (rows.empty()) throw pfm::data_error("no loading rows in " + loadings_path);
            table.resize(static_cast<int>(rows.size()),
                         static_cast<int>(rows.front().size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                for (std::size_t c = 0; c < rows.front().size(); ++c) {
                    table(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
                }
            }
        } else {
            table = pfm::read_matrix_csv(loadings_path);
        }
    }
    const pfm::RotationResult result = pfm::oblimin_rotate(table, gamma, seed);
    pfm::write_rotation_result(result, row_names, threshold, out_dir);
    auto manifest = base_manifest("rotate", seed);
    manifest.emplace_back("loadings", loadings_path);
    manifest.emplace_back("gamma", std::to_string(gamma));
    manifest.emplace_back("threshold", std::to_string(threshold));
    manifest.emplace_back("criterion_value", std::to_string(result.criterion_value));
    pfm::write_manifest(manifest, fs::path(out_dir) / "manifest.txt");
    std::cout << pfm::loading_display(result, row_names, threshold);
    std::cout << "factor correlation:\n" << result.factor_correlation << "\n";
    return 0;
}

int run_scores(const std::string& params_path, const std::string& counts_path,
               const std::string& covariates_path, const std::string& schema_path, int T,
               const std::string& out_path) {
    std::vector<std::string> columns;
    const pfm::Theta theta = pfm::read_theta(params_path, &columns);
    const pfm::CountMatrix counts = pfm::load_counts_csv(counts_path);
    const auto design = load_design(covariates_path, schema_path);
    const auto grid = pfm::tensor_grid(pfm::gauss_hermite_rule(T), theta.dims.q);
    const pfm::EStepSummary estep = pfm::e_step(counts, theta, grid, design);
    const auto labels = pfm::assign_clusters(estep);
    const Eigen::MatrixXd resp = estep.responsibilities();
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(counts.rows(), theta.dims.q);
    for (int i = 0; i < theta.dims.k; ++i) {
        scores += resp.col(i).asDiagonal() * estep.cond_mean[i];
    }
    if (fs::path(out_path).has_parent_path()) {
        fs::create_directories(fs::path(out_path).parent_path());
    }
    std::ofstream out(out_path);
    if (!out) throw pfm::data_error("cannot write " + out_path);
    for (int c = 0; c < theta.dims.q; ++c) out << "score" << c + 1 << ',';
    out << "label";
    for (int i = 0; i < theta.dims.k; ++i) out << ",resp" << i + 1;
    out << '\n';
    char buf[40];
    for (int l = 0; l < counts.rows(); ++l) {
        for (int c = 0; c < theta.dims.q; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", scores(l, c));
            out << buf << ',';
        }
        out << labels[l] + 1;
        for (int i = 0; i < theta.dims.k; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", resp(l, i));
            out << ',' << buf;
        }
        out << '\n';
    }
    std::cout << "wrote scores for " << counts.rows() << " rows\n";
    return 0;
}

int run_check(const std::string& params_path, double tol) {
    const pfm::Theta theta = pfm::read_theta(params_path);
    std::cout << pfm::check_identifiability(theta, tol).to_string();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Poisson factor mixture models for multivariate count data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string counts_path, covariates_path, schema_path;

    auto* fit_cmd = app.add_subcommand("fit", "fit a model to a counts CSV");
    std::string fit_out = "pfmix_fit";
    int q = 1, k = 1;
    CommonFitOptions fit_opt;
    fit_cmd->add_option("--counts", counts_path, "counts CSV")->required();
    fit_cmd->add_option("--covariates", covariates_path, "covariate CSV (optional)");
    fit_cmd->add_option("--schema", schema_path, "covariate schema (default: built-in preset)");
    fit_cmd->add_option("-q,--factors", q, "latent factors")->required();
    fit_cmd->add_option("-k,--clusters", k, "mixture components")->required();
    fit_cmd->add_option("--out", fit_out, "output directory");
    add_fit_options(fit_cmd, fit_opt);

    auto* select_cmd = app.add_subcommand("select", "grid search over (q, k)");
    std::string q_list = "1,2", k_list = "1..4", criterion = "bic",
                select_out = "selection.csv";
    int seeds_per_cell = 5;
    CommonFitOptions select_opt;
    select_cmd->add_option("--counts", counts_path, "counts CSV")->required();
    select_cmd->add_option("--covariates", covariates_path, "covariate CSV (optional)");
    select_cmd->add_option("--schema", schema_path, "covariate schema");
    select_cmd->add_option("--q", q_list, "factor range, e.g. 1,2 or 1..3");
    select_cmd->add_option("--k", k_list, "cluster range, e.g. 1..5");
    select_cmd->add_option("--seeds", seeds_per_cell, "seeds per cell");
    select_cmd->add_option("--criterion", criterion, "reported choice")
        ->check(CLI::IsMember({"aic", "bic"}));
    select_cmd->add_option("--out", select_out, "selection table CSV path");
    add_fit_options(select_cmd, select_opt);

    auto* sim_cmd = app.add_subcommand("simulate", "generate synthetic datasets or studies");
    std::string design_name = "generated", sim_out = "pfmix_sim", sim_mode = "metrics";
    std::string grid_q = "1,2,3", grid_k = "1..4";
    int sim_n = 2000, sim_p = 10, sim_q = 2, sim_k = 3, replicates = 0, sim_seeds = 10;
    double separation = 0.87;
    std::uint64_t sim_seed = 1, loading_seed = 42;
    CommonFitOptions sim_opt;
    sim_cmd->add_option("--design", design_name, "fixture-q2k3 or generated")
        ->check(CLI::IsMember({"fixture-q2k3", "generated"}));
    sim_cmd->add_option("--n", sim_n, "observations")->required();
    sim_cmd->add_option("--p", sim_p, "count variables (generated designs)");
    sim_cmd->add_option("--q", sim_q, "latent factors (generated designs)");
    sim_cmd->add_option("--k", sim_k, "components (generated designs)");
    sim_cmd->add_option("--separation", separation, "between-cluster variance share");
    sim_cmd->add_option("--seed", sim_seed, "master seed");
    sim_cmd->add_option("--loading-seed", loading_seed, "loading generator seed");
    sim_cmd->add_option("--replicates", replicates,
                        "run a replicate study instead of writing one dataset");
    sim_cmd->add_option("--fit-seeds", sim_seeds, "seeds per replicate (or per cell)");
    sim_cmd->add_option("--mode", sim_mode, "replicate study mode")
        ->check(CLI::IsMember({"metrics", "selection"}));
    sim_cmd->add_option("--grid-q", grid_q, "selection-mode factor range");
    sim_cmd->add_option("--grid-k", grid_k, "selection-mode cluster range");
    sim_cmd->add_option("--out", sim_out, "output directory");
    add_fit_options(sim_cmd, sim_opt, /*include_seed=*/false);

    auto* rotate_cmd = app.add_subcommand("rotate", "oblimin rotation of a loading matrix");
    std::string loadings_path, rotate_out = "pfmix_rotation";
    double gamma = 0.0, threshold = 0.2;
    std::uint64_t rotate_seed = 1;
    rotate_cmd->add_option("--loadings", loadings_path, "loadings CSV or parameter file")
        ->required();
    rotate_cmd->add_option("--gamma", gamma, "oblimin family parameter (0 = quartimin)");
    rotate_cmd->add_option("--threshold", threshold, "display threshold on |loading|");
    rotate_cmd->add_option("--seed", rotate_seed, "restart seed");
    rotate_cmd->add_option("--out", rotate_out, "output directory");

    auto* scores_cmd = app.add_subcommand("scores", "factor scores and labels from a fit");
    std::string params_path, scores_out = "scores.csv";
    int scores_T = 8;
    scores_cmd->add_option("--params", params_path, "parameter file from fit")->required();
    scores_cmd->add_option("--counts", counts_path, "counts CSV")->required();
    scores_cmd->add_option("--covariates", covariates_path, "covariate CSV (optional)");
    scores_cmd->add_option("--schema", schema_path, "covariate schema");
    scores_cmd->add_option("-T,--quadrature-points", scores_T, "quadrature points");
    scores_cmd->add_option("--out", scores_out, "scores CSV path");

    auto* check_cmd = app.add_subcommand("check", "identifiability report for a parameter file");
    double check_tol = 1e-8;
    check_cmd->add_option("--params", params_path, "parameter file")->required();
    check_cmd->add_option("--tol", check_tol, "tolerance");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit_cmd->parsed()) {
            return run_fit(counts_path, covariates_path, schema_path, q, k, fit_opt, fit_out);
        }
        if (select_cmd->parsed()) {
            return run_select(counts_path, covariates_path, schema_path, q_list, k_list,
                              seeds_per_cell, select_opt, criterion, select_out);
        }
        if (sim_cmd->parsed()) {
            if (replicates > 0) {
                return run_replicate_study(design_name, sim_n, sim_p, sim_q, sim_k, separation,
                                           replicates, sim_seeds, sim_seed, loading_seed,
                                           sim_mode, grid_q, grid_k, sim_opt, sim_out);
            }
            return run_simulate(design_name, sim_n, sim_p, sim_q, sim_k, separation, sim_seed,
                                loading_seed, sim_out);
        }
        if (rotate_cmd->parsed()) {
            return run_rotate(loadings_path, gamma, threshold, rotate_seed, rotate_out);
        }
        if (scores_cmd->parsed()) {
            return run_scores(params_path, counts_path, covariates_path, schema_path, scores_T,
                              scores_out);
        }
        if (check_cmd->parsed()) {
            return run_check(params_path, check_tol);
        }
    } catch (const pfm::numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const pfm::contract_error& e) {
        std::cerr << "internal contract violation: " << e.what() << "\n";
        return 2;
    } catch (const pfm::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
