#include "pfm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <numeric>
#include <sstream>

#include "pfm/covariates.hpp"
#include "pfm/errors.hpp"
#include "pfm/metrics.hpp"
#include "pfm/rng.hpp"

namespace pfm {

namespace {

// True intercepts and loadings of the q=2, p=10 recovery table.
constexpr double kFixtureL0[10] = {0.00, 0.62, -0.23, -0.34, 0.20,
                                   0.21, -0.75, -0.41, 0.16, 0.26};
constexpr double kFixtureL1[10] = {0.76, 0.75, 0.77, 0.78, 0.93,
                                   -0.09, -0.44, -0.15, -0.05, -0.36};
constexpr double kFixtureL2[10] = {0.00, -0.49, -0.44, -0.45, -0.38,
                                   0.90, 0.80, 0.96, 0.78, 0.88};

}  // namespace

void SimulationDesign::validate() const {
    ModelDims d = dims;
    d.n = std::max(d.n, 1);
    d.validate();
    if (replicates < 1) throw config_error("SimulationDesign: replicates must be >= 1");
    if (seeds_per_replicate < 1) {
        throw config_error("SimulationDesign: seeds_per_replicate must be >= 1");
    }
    if (!(between_fraction > 0.0 && between_fraction < 1.0)) {
        throw config_error("SimulationDesign: between_fraction must be in (0, 1)");
    }
    if (source == ThetaSource::kFixtureQ2K3 &&
        (dims.p != 10 || dims.q != 2 || dims.k != 3)) {
        throw config_error("SimulationDesign: the fixture requires p=10, q=2, k=3");
    }
}

Theta SimulationDesign::make_theta() const {
    validate();
    if (source == ThetaSource::kFixtureQ2K3) return pfm::fixture_q2k3();
    Theta theta;
    theta.dims = dims;
    theta.dims.m = 0;
    theta.loadings = generate_quasi_simple_loadings(dims.p, dims.q, loading_seed);
    theta.mixture = separated_latent_mixture(dims.q, dims.k, between_fraction);
    theta.validate();
    return theta;
}

Loadings generate_quasi_simple_loadings(int p, int q, std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x10AD));
    Loadings l = Loadings::zeros(p, q);
    for (int j = 0; j < p; ++j) {
        l.intercepts(j) = rng.uniform(-0.8, 0.8);
        const int primary = j % q;  // balanced round-robin
        const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
        l.loadings(j, primary) = sign * rng.uniform(0.7, 1.0);
        for (int c = 0; c < q; ++c) {
            if (c == primary) continue;
            if (rng.uniform() < 0.5) l.loadings(j, c) = rng.uniform(-0.5, 0.5);
        }
    }
    l.apply_mask();
    return l;
}

LatentMixture separated_latent_mixture(int q, int k, double between_fraction) {
    LatentMixture mix;
    mix.weights = k == 3 ? (Eigen::VectorXd(3) << 0.3, 0.3, 0.4).finished()
                         : Eigen::VectorXd::Constant(k, 1.0 / k);
    mix.means.assign(k, Eigen::VectorXd::Zero(q));
    if (k == 1) {
        mix.covs.assign(1, Eigen::MatrixXd::Identity(q, q));
        return mix;
    }
    for (int i = 0; i < k; ++i) {
        if (q == 1) {
            mix.means[i](0) = i - (k - 1) / 2.0;
        } else {
            const double angle = 2.0 * std::numbers::pi * i / k;
            mix.means[i](0) = std::cos(angle);
            mix.means[i](1) = std::sin(angle);
        }
    }
    Eigen::VectorXd center = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < k; ++i) center += mix.weights(i) * mix.means[i];
    for (int i = 0; i < k; ++i) mix.means[i] -= center;

    // Rescale the means so the between-cluster share of each latent
    // variance equals between_fraction, then standardize exactly.
    Eigen::MatrixXd between = Eigen::MatrixXd::Zero(q, q);
    for (int i = 0; i < k; ++i) {
        between += mix.weights(i) * mix.means[i] * mix.means[i].transpose();
    }
    const double scale = std::sqrt(between_fraction * q / between.trace());
    for (int i = 0; i < k; ++i) mix.means[i] *= scale;
    mix.covs.assign(k, (1.0 - between_fraction) * Eigen::MatrixXd::Identity(q, q));

    Eigen::MatrixXd var = (1.0 - between_fraction) * Eigen::MatrixXd::Identity(q, q) +
                          scale * scale * between;
    const Eigen::MatrixXd lower = cholesky_psd(var).lower;
    for (int i = 0; i < k; ++i) {
        mix.means[i] = lower.triangularView<Eigen::Lower>().solve(mix.means[i]);
        Eigen::MatrixXd half = lower.triangularView<Eigen::Lower>().solve(mix.covs[i]);
        Eigen::MatrixXd cov =
            lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(half.transpose()));
        mix.covs[i] = 0.5 * (cov + cov.transpose());
    }
    return mix;
}

Theta fixture_q2k3() {
    Theta theta;
    theta.dims = {1, 10, 2, 3, 0};
    theta.loadings = Loadings::zeros(10, 2);
    for (int j = 0; j < 10; ++j) {
        theta.loadings.intercepts(j) = kFixtureL0[j];
        theta.loadings.loadings(j, 0) = kFixtureL1[j];
        theta.loadings.loadings(j, 1) = kFixtureL2[j];
    }
    LatentMixture mix;
    mix.weights = (Eigen::VectorXd(3) << 0.3, 0.3, 0.4).finished();
    mix.means = {(Eigen::VectorXd(2) << 1.200, 0.760).finished(),
                 (Eigen::VectorXd(2) << -1.190, 0.770).finished(),
                 (Eigen::VectorXd(2) << -0.0075, -1.148).finished()};
    mix.covs = {(Eigen::MatrixXd(2, 2) << 0.170, 0.080, 0.080, 0.140).finished(),
                (Eigen::MatrixXd(2, 2) << 0.160, -0.080, -0.080, 0.120).finished(),
                (Eigen::MatrixXd(2, 2) << 0.110, -0.005, -0.005, 0.110).finished()};
    theta.mixture = std::move(mix);
    return theta;
}

SimulatedDataset simulate_dataset(const Theta& theta, int n, std::uint64_t seed,
                                  const std::optional<Eigen::MatrixXd>& design) {
    if (n < 1) throw contract_error("simulate_dataset: n must be >= 1");
    if (design && design->rows() < n) {
        throw contract_error("simulate_dataset: design has fewer rows than n");
    }
    const int p = theta.dims.p;
    const int q = theta.dims.q;
    const int k = theta.dims.k;

    std::vector<Eigen::MatrixXd> chol(k);
    for (int i = 0; i < k; ++i) chol[i] = cholesky_psd(theta.mixture.covs[i]).lower;

    SimulatedDataset out;
    out.theta_true = theta;
    out.counts.values.resize(n, p);
    out.true_labels.resize(n);
    out.true_scores.resize(n, q);

    for (int l = 0; l < n; ++l) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(l)));
        Eigen::VectorXd weights = theta.mixture.weights;
        if (design) {
            weights = mixture_weights_logit(theta.mixture.eta, design->row(l).transpose());
        }
        const int comp = rng.categorical(weights);
        out.true_labels[l] = comp;
        Eigen::VectorXd draw(q);
        for (int d = 0; d < q; ++d) draw(d) = rng.normal();
        const Eigen::VectorXd z = theta.mixture.means[comp] + chol[comp] * draw;
        out.true_scores.row(l) = z.transpose();
        const Eigen::VectorXd lin = theta.loadings.intercepts + theta.loadings.loadings * z;
        for (int j = 0; j < p; ++j) {
            if (!(lin(j) <= 700.0)) {
                std::ostringstream os;
                os << "simulate_dataset: rate overflow at row " << l << ", variable " << j;
                throw numerical_error(os.str());
            }
            out.counts.values(l, j) = rng.poisson(std::exp(lin(j)));
        }
    }

    // soft frequency sanity check (constant-weight designs only)
    if (!design) {
        Eigen::VectorXd freq = Eigen::VectorXd::Zero(k);
        for (int label : out.true_labels) freq(label) += 1.0;
        freq /= static_cast<double>(n);
        for (int i = 0; i < k; ++i) {
            const double w = theta.mixture.weights(i);
            if (std::abs(freq(i) - w) > 4.0 * std::sqrt(w * (1.0 - w) / n)) {
                out.frequency_warning = true;
            }
        }
    }
    return out;
}

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw contract_error("quantile: empty input");
    std::sort(values.begin(), values.end());
    const double pos = prob * (values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - lo;
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

FitResult best_of_seeds_fit(const CountMatrix& counts, const ModelDims& dims, int seeds,
                            const FitConfig& config) {
    std::optional<FitResult> best;
    for (int seed = 1; seed <= seeds; ++seed) {
        FitConfig cfg = config;
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.init = seed == 1 ? InitStrategy::kClassicalFaWard : InitStrategy::kRandom;
        try {
            FitResult result = fit(counts, dims, cfg);
            if (!best || result.loglik > best->loglik) best = std::move(result);
        } catch (const error&) {
            // this start failed; others may succeed
        }
    }
    if (!best) throw numerical_error("best_of_seeds_fit: every start failed");
    return *best;
}

namespace {

/// Sign-aligns fitted loading columns to the truth (factor sign flips are
/// likelihood-invariant).
void align_column_signs(const Eigen::MatrixXd& truth, Eigen::MatrixXd& loadings) {
    for (Eigen::Index c = 0; c < loadings.cols(); ++c) {
        if (truth.col(c).dot(loadings.col(c)) < 0.0) loadings.col(c) = -loadings.col(c);
    }
}

template <typename Work>
void run_indexed(int jobs, int threads, Work&& work) {
    if (threads <= 1) {
        for (int j = 0; j < jobs; ++j) work(j);
        return;
    }
    std::vector<std::future<void>> futures;
    int next = 0;
    while (next < jobs) {
        const int batch = std::min(threads, jobs - next);
        futures.clear();
        for (int b = 0; b < batch; ++b) {
            futures.push_back(std::async(std::launch::async, work, next + b));
        }
        for (auto& f : futures) f.get();
        next += batch;
    }
}

}  // namespace

MetricsSummary run_metric_replicates(const SimulationDesign& design, const FitConfig& config,
                                     int threads) {
    design.validate();
    const Theta truth = design.make_theta();
    const int R = design.replicates;

    MetricsSummary summary;
    summary.replicates.assign(R, MetricReplicate{});
    run_indexed(R, threads, [&](int r) {
        MetricReplicate& row = summary.replicates[r];
        row.replicate = r;
        try {
            const SimulatedDataset data = simulate_dataset(
                truth, design.dims.n, design.master_seed ^ static_cast<std::uint64_t>(r + 1));
            ModelDims dims = truth.dims;
            dims.n = design.dims.n;
            const FitResult best =
                best_of_seeds_fit(data.counts, dims, design.seeds_per_replicate, config);
            row.usable = true;
            row.loglik = best.loglik;
            row.iterations = best.iterations;
            row.converged = best.converged;
            if (design.dims.k > 1) {
                row.ari = adjusted_rand_index(data.true_labels, best.labels);
                row.misclassification = misclassification_rate(data.true_labels, best.labels);
            }
            row.intercepts = best.theta.loadings.intercepts;
            row.loadings = best.theta.loadings.loadings;
            align_column_signs(truth.loadings.loadings, row.loadings);
        } catch (const error&) {
            row.usable = false;
        }
    });

    std::vector<double> aris, miscs;
    int usable = 0;
    for (const auto& row : summary.replicates) {
        if (!row.usable) continue;
        ++usable;
        if (design.dims.k > 1) {
            aris.push_back(row.ari);
            miscs.push_back(row.misclassification);
        }
    }
    if (usable < R - R / 5) {
        std::ostringstream os;
        os << "run_metric_replicates: " << R - usable << " of " << R << " replicates failed";
        throw numerical_error(os.str());
    }
    summary.ari_defined = design.dims.k > 1;
    if (summary.ari_defined) {
        summary.median_ari = quantile(aris, 0.5);
        summary.q1_ari = quantile(aris, 0.25);
        summary.q3_ari = quantile(aris, 0.75);
        summary.median_misclassification = quantile(miscs, 0.5);
        summary.q1_misclassification = quantile(miscs, 0.25);
        summary.q3_misclassification = quantile(miscs, 0.75);
    }

    const int p = design.dims.p;
    const int q = design.dims.q;
    summary.intercept_mean = Eigen::VectorXd::Zero(p);
    summary.intercept_sd = Eigen::VectorXd::Zero(p);
    summary.loading_mean = Eigen::MatrixXd::Zero(p, q);
    summary.loading_sd = Eigen::MatrixXd::Zero(p, q);
    for (const auto& row : summary.replicates) {
        if (!row.usable) continue;
        summary.intercept_mean += row.intercepts;
        summary.loading_mean += row.loadings;
    }
    summary.intercept_mean /= usable;
    summary.loading_mean /= usable;
    for (const auto& row : summary.replicates) {
        if (!row.usable) continue;
        summary.intercept_sd.array() +=
            (row.intercepts - summary.intercept_mean).array().square();
        summary.loading_sd.array() += (row.loadings - summary.loading_mean).array().square();
    }
    if (usable > 1) {
        summary.intercept_sd = (summary.intercept_sd / (usable - 1)).cwiseSqrt();
        summary.loading_sd = (summary.loading_sd / (usable - 1)).cwiseSqrt();
    }
    return summary;
}

SimulationDesign replication_design(const std::string& name) {
    SimulationDesign design;
    design.dims.n = 2000;
    design.dims.p = 10;
    design.dims.m = 0;
    design.loading_seed = 42;
    if (name == "k3-q2") {
        design.source = ThetaSource::kFixtureQ2K3;
        design.dims.q = 2;
        design.dims.k = 3;
    } else if (name == "k2-q1") {
        design.source = ThetaSource::kGenerated;
        design.dims.q = 1;
        design.dims.k = 2;
        design.between_fraction = 0.885;
    } else if (name == "k3-q1") {
        design.source = ThetaSource::kGenerated;
        design.dims.q = 1;
        design.dims.k = 3;
        design.between_fraction = 0.991;
    } else if (name == "k6-q1") {
        design.source = ThetaSource::kGenerated;
        design.dims.q = 1;
        design.dims.k = 6;
        design.between_fraction = 0.991;
    } else {
        throw config_error("replication_design: unknown design '" + name + "'");
    }
    return design;
}

SelectionSummary run_selection_replicates(const SimulationDesign& design,
                                          const std::vector<int>& q_range,
                                          const std::vector<int>& k_range, int seeds_per_cell,
                                          const FitConfig& config, int threads) {
    design.validate();
    const Theta truth = design.make_theta();
    const int R = design.replicates;

    SelectionSummary summary;
    summary.q_range = q_range;
    summary.k_range = k_range;
    summary.replicates.assign(R, SelectionReplicate{});
    run_indexed(R, threads, [&](int r) {
        SelectionReplicate& row = summary.replicates[r];
        row.replicate = r;
        try {
            const SimulatedDataset data = simulate_dataset(
                truth, design.dims.n, design.master_seed ^ static_cast<std::uint64_t>(r + 1));
            const SelectionTable table =
                grid_search(data.counts, q_range, k_range, seeds_per_cell, config);
            const SelectionCell* by_aic = table.aic_choice();
            const SelectionCell* by_bic = table.bic_choice();
            if (by_aic && by_bic) {
                row.usable = true;
                row.aic_q = by_aic->q;
                row.aic_k = by_aic->k;
                row.bic_q = by_bic->q;
                row.bic_k = by_bic->k;
            }
        } catch (const error&) {
            row.usable = false;
        }
    });

    int usable = 0;
    summary.aic_frequency =
        Eigen::MatrixXd::Zero(static_cast<int>(k_range.size()), static_cast<int>(q_range.size()));
    summary.bic_frequency = summary.aic_frequency;
    for (const auto& row : summary.replicates) {
        if (!row.usable) continue;
        ++usable;
        const auto qi_a = std::find(q_range.begin(), q_range.end(), row.aic_q) - q_range.begin();
        const auto ki_a = std::find(k_range.begin(), k_range.end(), row.aic_k) - k_range.begin();
        const auto qi_b = std::find(q_range.begin(), q_range.end(), row.bic_q) - q_range.begin();
        const auto ki_b = std::find(k_range.begin(), k_range.end(), row.bic_k) - k_range.begin();
        summary.aic_frequency(ki_a, qi_a) += 1.0;
        summary.bic_frequency(ki_b, qi_b) += 1.0;
    }
    if (usable < R - R / 5) {
        std::ostringstream os;
        os << "run_selection_replicates: " << R - usable << " of " << R
           << " replicates failed";
        throw numerical_error(os.str());
    }
    summary.aic_frequency /= usable;
    summary.bic_frequency /= usable;
    return summary;
}

}  // namespace pfm
