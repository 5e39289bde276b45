#include "pfm/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "pfm/covariates.hpp"
#include "pfm/errors.hpp"
#include "pfm/rng.hpp"
#include "pfm/selection.hpp"

namespace pfm {

namespace {

constexpr double kLinearPredictorMax = 700.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// log mixture weights per observation: constant log(pi) rows, or the
/// multinomial-logit weights when a design matrix is present.
Eigen::MatrixXd log_weights_matrix(const Theta& theta, Eigen::Index n,
                                   const std::optional<Eigen::MatrixXd>& design) {
    const int k = theta.dims.k;
    Eigen::MatrixXd lw(n, k);
    if (!design) {
        lw.rowwise() = theta.mixture.weights.array().log().matrix().transpose();
    } else {
        lw.leftCols(k - 1) = (*design) * theta.mixture.eta.transpose();
        lw.col(k - 1).setZero();
        for (Eigen::Index l = 0; l < n; ++l) {
            lw.row(l).array() -= log_sum_exp(Eigen::VectorXd(lw.row(l)));
        }
    }
    return lw;
}

}  // namespace

void FitConfig::validate() const {
    if (quadrature_points < 1 || quadrature_points > 64) {
        throw config_error("FitConfig: quadrature_points must be in [1, 64]");
    }
    if (max_iter < 1) throw config_error("FitConfig: max_iter must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw config_error("FitConfig: epsilon must be in (0, 1)");
    }
    if (newton_steps_per_m < 1 || newton_max_halvings < 1) {
        throw config_error("FitConfig: Newton settings must be positive");
    }
    if (max_restarts < 0) throw config_error("FitConfig: max_restarts must be >= 0");
}

EStepSummary e_step(const CountMatrix& counts, const Theta& theta, const TensorGrid& grid,
                    const std::optional<Eigen::MatrixXd>& design) {
    theta.validate();
    if (theta.dims.m > 0 && !design) {
        throw contract_error("e_step: m > 0 requires a design matrix");
    }
    if (design && design->cols() != theta.dims.m + 1) {
        throw contract_error("e_step: design columns must equal m + 1");
    }
    const Eigen::Index n = counts.values.rows();
    const int p = theta.dims.p;
    const int q = theta.dims.q;
    const int k = theta.dims.k;
    const Eigen::Index G = grid.size();

    EStepSummary s;
    s.log_resp.resize(n, k);
    s.cond_mean.assign(k, Eigen::MatrixXd(n, q));
    s.cond_second.assign(k, Eigen::MatrixXd(n, q * q));
    s.nodes.resize(k);
    s.node_mass.assign(k, Eigen::VectorXd(G));
    s.node_counts.assign(k, Eigen::MatrixXd(p, G));
    s.per_obs_loglik.resize(n);

    const Eigen::VectorXd log_fact = log_factorial_row_sums(counts.values);
    const Eigen::MatrixXd ycast = counts.values.cast<double>();

    // Per-component conditional node log-densities; kept for the moment
    // and sufficient-statistic passes after responsibilities are known.
    std::vector<Eigen::MatrixXd> cond_logw(k);
    for (int i = 0; i < k; ++i) {
        s.nodes[i] = transform_nodes(grid, theta.mixture.means[i], theta.mixture.covs[i]);
        Eigen::MatrixXd lin = theta.loadings.loadings * s.nodes[i].transpose();  // p x G
        lin.colwise() += theta.loadings.intercepts;
        const double mx = lin.maxCoeff();
        if (!(mx <= kLinearPredictorMax)) {
            std::ostringstream os;
            os << "e_step: linear predictor overflow (" << mx << ") in component " << i;
            throw numerical_error(os.str());
        }
        const Eigen::VectorXd rate_sums = lin.array().exp().colwise().sum();
        Eigen::MatrixXd lw = (ycast * lin).rowwise() - rate_sums.transpose();  // n x G
        lw.rowwise() += grid.log_weights.transpose();
        for (Eigen::Index l = 0; l < n; ++l) {
            const double marginal = log_sum_exp(Eigen::VectorXd(lw.row(l)));
            s.log_resp(l, i) = marginal - log_fact(l);  // log f(y_l | s_i); prior added below
            lw.row(l).array() -= marginal;
        }
        cond_logw[i] = std::move(lw);
    }

    const Eigen::MatrixXd log_prior = log_weights_matrix(theta, n, design);
    s.log_resp += log_prior;
    for (Eigen::Index l = 0; l < n; ++l) {
        const double norm = log_sum_exp(Eigen::VectorXd(s.log_resp.row(l)));
        if (!std::isfinite(norm)) {
            std::ostringstream os;
            os << "e_step: observation " << l << " has zero likelihood under every component";
            throw numerical_error(os.str());
        }
        s.per_obs_loglik(l) = norm;
        s.log_resp.row(l).array() -= norm;
    }
    s.loglik = s.per_obs_loglik.sum();

    const Eigen::MatrixXd resp = s.responsibilities();
    for (int i = 0; i < k; ++i) {
        Eigen::MatrixXd w = cond_logw[i].array().exp();  // n x G, rows sum to 1
        s.cond_mean[i].noalias() = w * s.nodes[i];
        // E(z z' | y, s_i): row-major q x q blocks per observation.
        for (int a = 0; a < q; ++a) {
            for (int b = a; b < q; ++b) {
                const Eigen::VectorXd prod =
                    w * (s.nodes[i].col(a).array() * s.nodes[i].col(b).array()).matrix();
                s.cond_second[i].col(a * q + b) = prod;
                if (b != a) s.cond_second[i].col(b * q + a) = prod;
            }
        }
        w.array().colwise() *= resp.col(i).array();  // r_li * w~_lit
        s.node_mass[i] = w.colwise().sum();
        s.node_counts[i].noalias() = ycast.transpose() * w;
    }
    return s;
}

namespace detail {

double loading_row_objective(const EStepSummary& estep, int variable,
                             const Eigen::VectorXd& coef) {
    const int k = static_cast<int>(estep.nodes.size());
    double value = 0.0;
    for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd lin =
            (coef(0) + (estep.nodes[i] * coef.tail(coef.size() - 1)).array()).matrix();
        if (lin.maxCoeff() > kLinearPredictorMax) return -kInf;
        value += estep.node_counts[i].row(variable).dot(lin) -
                 estep.node_mass[i].dot(lin.array().exp().matrix());
    }
    return value;
}

Eigen::VectorXd loading_row_gradient(const EStepSummary& estep, int variable,
                                     const Eigen::VectorXd& coef) {
    const int k = static_cast<int>(estep.nodes.size());
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(coef.size());
    for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd lin =
            (coef(0) + (estep.nodes[i] * coef.tail(coef.size() - 1)).array()).matrix();
        const Eigen::VectorXd resid =
            estep.node_counts[i].row(variable).transpose() -
            (estep.node_mass[i].array() * lin.array().exp()).matrix();
        grad(0) += resid.sum();
        grad.tail(coef.size() - 1).noalias() += estep.nodes[i].transpose() * resid;
    }
    return grad;
}

Eigen::VectorXd newton_loading_row(const EStepSummary& estep, int variable,
                                   const Eigen::VectorXd& coef,
                                   const std::vector<bool>& free_coef, int max_halvings) {
    const Eigen::Index d = coef.size();
    std::vector<int> free_idx;
    for (Eigen::Index c = 0; c < d; ++c) {
        if (free_coef[c]) free_idx.push_back(static_cast<int>(c));
    }
    if (free_idx.empty()) return coef;
    const int nf = static_cast<int>(free_idx.size());
    const int k = static_cast<int>(estep.nodes.size());

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < k; ++i) {
        const Eigen::Index G = estep.nodes[i].rows();
        Eigen::MatrixXd ztil(G, d);
        ztil.col(0).setOnes();
        ztil.rightCols(d - 1) = estep.nodes[i];
        const Eigen::VectorXd lin = ztil * coef;
        if (lin.maxCoeff() > kLinearPredictorMax) {
            throw numerical_error("m_step_loadings: linear predictor overflow inside Newton");
        }
        const Eigen::VectorXd mass_rate =
            (estep.node_mass[i].array() * lin.array().exp()).matrix();
        grad.noalias() +=
            ztil.transpose() * (estep.node_counts[i].row(variable).transpose() - mass_rate);
        hess.noalias() -= ztil.transpose() * mass_rate.asDiagonal() * ztil;
    }

    Eigen::VectorXd gf(nf);
    Eigen::MatrixXd hf(nf, nf);
    for (int a = 0; a < nf; ++a) {
        gf(a) = grad(free_idx[a]);
        for (int b = 0; b < nf; ++b) hf(a, b) = hess(free_idx[a], free_idx[b]);
    }
    hf.diagonal().array() -= 1e-8;  // ridge
    const Eigen::LDLT<Eigen::MatrixXd> solver(-hf);
    if (solver.info() != Eigen::Success) {
        throw numerical_error("m_step_loadings: Newton Hessian factorization failed");
    }
    const Eigen::VectorXd step = solver.solve(gf);

    const double base = loading_row_objective(estep, variable, coef);
    double alpha = 1.0;
    for (int h = 0; h <= max_halvings; ++h) {
        Eigen::VectorXd cand = coef;
        for (int a = 0; a < nf; ++a) cand(free_idx[a]) += alpha * step(a);
        if (loading_row_objective(estep, variable, cand) >= base) return cand;
        alpha *= 0.5;
    }
    return coef;  // no improving step found; keep the current point (GEM-safe)
}

}  // namespace detail

Loadings m_step_loadings(const EStepSummary& estep, const Theta& theta,
                         const FitConfig& config) {
    const int p = theta.dims.p;
    const int q = theta.dims.q;
    Loadings out = theta.loadings;
    for (int j = 0; j < p; ++j) {
        std::vector<bool> free_coef(q + 1);
        free_coef[0] = !(j == 0 && config.lambda10 == Lambda10Policy::kFixed);
        for (int c = 0; c < q; ++c) free_coef[c + 1] = !out.fixed_mask(j, c + 1);
        Eigen::VectorXd coef(q + 1);
        coef(0) = out.intercepts(j);
        coef.tail(q) = out.loadings.row(j).transpose();
        for (int step = 0; step < config.newton_steps_per_m; ++step) {
            coef = detail::newton_loading_row(estep, j, coef, free_coef,
                                              config.newton_max_halvings);
        }
        out.intercepts(j) = coef(0);
        out.loadings.row(j) = coef.tail(q).transpose();
    }
    if (config.lambda10 == Lambda10Policy::kFree) {
        // keep the triangle but let the first intercept float
        out.fixed_mask(0, 0) = false;
    }
    out.apply_mask();
    return out;
}

MixtureUpdate m_step_mixture(const EStepSummary& estep) {
    const int k = static_cast<int>(estep.cond_mean.size());
    const Eigen::Index n = estep.log_resp.rows();
    const int q = static_cast<int>(estep.cond_mean[0].cols());
    const Eigen::MatrixXd resp = estep.responsibilities();
    const Eigen::VectorXd mass = resp.colwise().sum();

    MixtureUpdate u;
    u.weights = mass / static_cast<double>(n);
    u.means.resize(k);
    u.covs.resize(k);
    for (int i = 0; i < k; ++i) {
        if (mass(i) < 1e-6 * static_cast<double>(n)) {
            std::ostringstream os;
            os << "m_step_mixture: component " << i << " has responsibility mass " << mass(i)
               << " (below 1e-6 * n)";
            throw degenerate_component_error(os.str());
        }
        u.means[i] = estep.cond_mean[i].transpose() * resp.col(i) / mass(i);
        Eigen::VectorXd second = estep.cond_second[i].transpose() * resp.col(i) / mass(i);
        Eigen::MatrixXd cov =
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                second.data(), q, q) -
            u.means[i] * u.means[i].transpose();
        cov = 0.5 * (cov + cov.transpose());
        // nudge to PD if a tiny negative eigenvalue slipped in
        u.covs[i] = cov + cholesky_psd(cov).jitter * Eigen::MatrixXd::Identity(q, q);
    }
    return u;
}

Theta restandardize(const Theta& theta) {
    theta.validate();
    const int q = theta.dims.q;
    const int k = theta.dims.k;
    Theta out = theta;

    Eigen::VectorXd shift = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < k; ++i) shift += out.mixture.weights(i) * out.mixture.means[i];
    out.loadings.intercepts += out.loadings.loadings * shift;
    for (int i = 0; i < k; ++i) out.mixture.means[i] -= shift;

    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(q, q);
    for (int i = 0; i < k; ++i) {
        var += out.mixture.weights(i) *
               (out.mixture.covs[i] + out.mixture.means[i] * out.mixture.means[i].transpose());
    }
    Eigen::LLT<Eigen::MatrixXd> llt(var);
    if (llt.info() != Eigen::Success) {
        throw numerical_error("restandardize: mixture variance is not positive definite");
    }
    const Eigen::MatrixXd lower = llt.matrixL();
    const auto tri = lower.triangularView<Eigen::Lower>();
    for (int i = 0; i < k; ++i) {
        out.mixture.means[i] = tri.solve(out.mixture.means[i]).eval();
        const Eigen::MatrixXd half = tri.solve(out.mixture.covs[i]);
        const Eigen::MatrixXd cov = tri.solve(Eigen::MatrixXd(half.transpose()));
        out.mixture.covs[i] = 0.5 * (cov + cov.transpose());
    }
    out.loadings.loadings = out.loadings.loadings * lower;
    // Right-multiplication by a lower-triangular factor keeps the zero triangle;
    // clear the float residue so condition 2 is exact.
    for (int j = 0; j < out.dims.p; ++j) {
        for (int c = j + 1; c < q; ++c) out.loadings.loadings(j, c) = 0.0;
    }
    return out;
}

Theta rezero_first_intercept(const Theta& theta) {
    Theta out = theta;
    const Eigen::VectorXd row1 = out.loadings.loadings.row(0).transpose();
    const double delta = out.loadings.intercepts(0);
    const double norm2 = row1.squaredNorm();
    if (delta == 0.0 || norm2 == 0.0) {
        if (norm2 == 0.0) out.loadings.intercepts(0) = 0.0;
        return out;
    }
    const Eigen::VectorXd t = -(delta / norm2) * row1;
    out.loadings.intercepts += out.loadings.loadings * t;
    out.loadings.intercepts(0) = 0.0;  // exact by construction
    for (auto& mean : out.mixture.means) mean -= t;
    return out;
}

namespace {

/// Exact mixture-side normalization used at initialization: center and
/// whiten the component moments without compensating the loadings (there
/// is no likelihood to preserve yet).
void normalize_mixture_in_place(LatentMixture& mix) {
    const int k = mix.components();
    const int q = static_cast<int>(mix.means[0].size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < k; ++i) mean += mix.weights(i) * mix.means[i];
    for (int i = 0; i < k; ++i) mix.means[i] -= mean;
    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(q, q);
    for (int i = 0; i < k; ++i) {
        var += mix.weights(i) * (mix.covs[i] + mix.means[i] * mix.means[i].transpose());
    }
    const Eigen::MatrixXd lower = cholesky_psd(var).lower;
    for (int i = 0; i < k; ++i) {
        mix.means[i] = lower.triangularView<Eigen::Lower>().solve(mix.means[i]);
        Eigen::MatrixXd half = lower.triangularView<Eigen::Lower>().solve(mix.covs[i]);
        Eigen::MatrixXd cov =
            lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(half.transpose()));
        mix.covs[i] = 0.5 * (cov + cov.transpose());
    }
}

/// Standardized log(1 + y) columns. Throws on constant columns.
Eigen::MatrixXd standardized_log_counts(const CountMatrix& counts) {
    const Eigen::Index n = counts.values.rows();
    Eigen::MatrixXd x = (counts.values.cast<double>().array() + 1.0).log();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double mean = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - mean).square().sum() /
                                    static_cast<double>(n - 1));
        if (!(sd > 1e-12)) {
            std::ostringstream os;
            os << "initialize: column " << j << " ("
               << (j < static_cast<Eigen::Index>(counts.column_names.size())
                       ? counts.column_names[j]
                       : std::to_string(j))
               << ") is constant";
            throw data_error(os.str());
        }
        x.col(j) = (x.col(j).array() - mean) / sd;
    }
    return x;
}

/// Rotates the leading q x q block to lower-triangular form (QR of its
/// transpose) so the startupload loadings satisfy the triangle constraint
/// without discarding information.
Eigen::MatrixXd triangularize_loadings(Eigen::MatrixXd lam) {
    const int q = static_cast<int>(lam.cols());
    if (q == 1) return lam;
    const Eigen::MatrixXd head = lam.topRows(q);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(head.transpose());
    Eigen::MatrixXd rot = qr.householderQ();
    lam = lam * rot;
    // make the diagonal of the leading block non-negative for determinism
    for (int c = 0; c < q; ++c) {
        if (lam(c, c) < 0.0) lam.col(c) = -lam.col(c);
    }
    for (int j = 0; j < lam.rows(); ++j) {
        for (int c = j + 1; c < q; ++c) lam(j, c) = 0.0;
    }
    return lam;
}

/// Ward's minimum-variance agglomeration via the nearest-neighbor chain
/// algorithm on pairwise squared Euclidean distances. Returns 0-based
/// group labels. Subsamples deterministically above `max_points` and
/// assigns the remainder to the nearest group centroid.
std::vector<int> ward_labels(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                             int max_points = 2500) {
    const int n = static_cast<int>(points.rows());
    std::vector<int> subset(n);
    std::iota(subset.begin(), subset.end(), 0);
    if (n > max_points) {
        Rng rng(Rng::derive(seed, 0xAD5));
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
            std::swap(subset[i], subset[j]);
        }
        subset.resize(max_points);
        std::sort(subset.begin(), subset.end());
    }
    const int ns = static_cast<int>(subset.size());

    // Lance-Williams state: every active cluster has a size and a
    // representative distance row.
    std::vector<double> size(ns, 1.0);
    std::vector<bool> active(ns, true);
    Eigen::MatrixXd dist(ns, ns);
    for (int a = 0; a < ns; ++a) {
        dist(a, a) = 0.0;
        for (int b = a + 1; b < ns; ++b) {
            const double d = (points.row(subset[a]) - points.row(subset[b])).squaredNorm();
            dist(a, b) = d;
            dist(b, a) = d;
        }
    }
    std::vector<int> parent(ns);
    std::iota(parent.begin(), parent.end(), 0);
    const auto find_root = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    int clusters = ns;
    std::vector<int> chain;
    chain.reserve(ns);
    while (clusters > k) {
        if (chain.empty()) {
            for (int a = 0; a < ns; ++a) {
                if (active[a]) {
                    chain.push_back(a);
                    break;
                }
            }
        }
        const int current = chain.back();
        int best = -1;
        double best_d = kInf;
        for (int b = 0; b < ns; ++b) {
            if (!active[b] || b == current) continue;
            const double d = dist(current, b);
            if (d < best_d - 1e-15 || (std::abs(d - best_d) <= 1e-15 && b < best)) {
                best_d = d;
                best = b;
            }
        }
        if (chain.size() >= 2 && chain[chain.size() - 2] == best) {
            // reciprocal nearest neighbors: merge best into current
            chain.pop_back();
            chain.pop_back();
            const int a = std::min(current, best);
            const int b = std::max(current, best);
            const double sa = size[a], sb = size[b];
            for (int c = 0; c < ns; ++c) {
                if (!active[c] || c == a || c == b) continue;
                const double sc = size[c];
                const double d = ((sa + sc) * dist(a, c) + (sb + sc) * dist(b, c) -
                                  sc * dist(a, b)) /
                                 (sa + sb + sc);
                dist(a, c) = d;
                dist(c, a) = d;
            }
            size[a] = sa + sb;
            active[b] = false;
            parent[b] = a;
            --clusters;
        } else {
            chain.push_back(best);
        }
    }

    // map roots to consecutive labels in first-appearance order
    std::vector<int> root_label(ns, -1);
    int next = 0;
    std::vector<int> sub_labels(ns);
    for (int a = 0; a < ns; ++a) {
        const int r = find_root(a);
        if (root_label[r] < 0) root_label[r] = next++;
        sub_labels[a] = root_label[r];
    }

    std::vector<int> labels(n, -1);
    for (int a = 0; a < ns; ++a) labels[subset[a]] = sub_labels[a];
    if (ns < n) {
        Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(k, points.cols());
        Eigen::VectorXd weight = Eigen::VectorXd::Zero(k);
        for (int a = 0; a < ns; ++a) {
            centroids.row(sub_labels[a]) += points.row(subset[a]);
            weight(sub_labels[a]) += 1.0;
        }
        for (int g = 0; g < k; ++g) centroids.row(g) /= std::max(weight(g), 1.0);
        for (int l = 0; l < n; ++l) {
            if (labels[l] >= 0) continue;
            int best = 0;
            double best_d = kInf;
            for (int g = 0; g < k; ++g) {
                const double d = (points.row(l) - centroids.row(g)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = g;
                }
            }
            labels[l] = best;
        }
    }
    return labels;
}

Theta init_classical_fa_ward(const CountMatrix& counts, const ModelDims& dims,
                             std::uint64_t seed) {
    const int p = dims.p;
    const int q = dims.q;
    const int k = dims.k;
    const Eigen::Index n = counts.values.rows();

    const Eigen::MatrixXd x = standardized_log_counts(counts);
    Eigen::MatrixXd corr = (x.transpose() * x) / static_cast<double>(n - 1);
    corr = 0.5 * (corr + corr.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
    if (es.info() != Eigen::Success) {
        throw numerical_error("initialize: eigen decomposition of the correlation failed");
    }
    Eigen::MatrixXd lam(p, q);
    for (int c = 0; c < q; ++c) {
        const int idx = p - 1 - c;  // leading principal factors
        const double ev = std::max(es.eigenvalues()(idx), 0.0);
        lam.col(c) = es.eigenvectors().col(idx) * std::sqrt(ev);
    }
    lam = triangularize_loadings(std::move(lam));

    Theta theta;
    theta.dims = dims;
    theta.loadings = Loadings::zeros(p, q);
    theta.loadings.loadings = lam;
    const Eigen::VectorXd col_means =
        counts.values.cast<double>().colwise().mean().cwiseMax(1e-3);
    theta.loadings.intercepts =
        col_means.array().log() - 0.5 * lam.rowwise().squaredNorm().array();
    theta.loadings.apply_mask();

    // regression-method provisional scores on the standardized scale
    Eigen::MatrixXd corr_j = corr;
    corr_j.diagonal().array() += 1e-8;
    const Eigen::MatrixXd scores = x * corr_j.ldlt().solve(lam);  // n x q

    const std::vector<int> groups = ward_labels(scores, k, seed);
    LatentMixture mix;
    mix.weights.resize(k);
    mix.means.assign(k, Eigen::VectorXd::Zero(q));
    mix.covs.assign(k, Eigen::MatrixXd::Zero(q, q));
    Eigen::VectorXd sizes = Eigen::VectorXd::Zero(k);
    for (Eigen::Index l = 0; l < n; ++l) {
        sizes(groups[l]) += 1.0;
        mix.means[groups[l]] += scores.row(l).transpose();
    }
    for (int i = 0; i < k; ++i) mix.means[i] /= std::max(sizes(i), 1.0);
    for (Eigen::Index l = 0; l < n; ++l) {
        const Eigen::VectorXd d = scores.row(l).transpose() - mix.means[groups[l]];
        mix.covs[groups[l]] += d * d.transpose();
    }
    for (int i = 0; i < k; ++i) {
        mix.covs[i] /= std::max(sizes(i) - 1.0, 1.0);
        mix.covs[i].diagonal().array() += 0.05;  // guard against tight groups
        mix.weights(i) = std::max(sizes(i), 1.0);
    }
    mix.weights /= mix.weights.sum();
    normalize_mixture_in_place(mix);
    theta.mixture = std::move(mix);
    if (dims.m > 0) theta.mixture.eta = Eigen::MatrixXd::Zero(k - 1, dims.m + 1);
    theta.validate();
    return theta;
}

Theta init_random(const CountMatrix& counts, const ModelDims& dims, std::uint64_t seed) {
    const int p = dims.p;
    const int q = dims.q;
    const int k = dims.k;
    Rng rng(Rng::derive(seed, 0xA11CE));

    Theta theta;
    theta.dims = dims;
    theta.loadings = Loadings::zeros(p, q);
    for (int j = 0; j < p; ++j) {
        for (int c = 0; c < q; ++c) theta.loadings.loadings(j, c) = 0.5 * rng.normal();
    }
    const Eigen::VectorXd col_means =
        counts.values.cast<double>().colwise().mean().cwiseMax(1e-3);
    theta.loadings.intercepts = col_means.array().log() -
                                0.5 * theta.loadings.loadings.rowwise().squaredNorm().array();
    theta.loadings.apply_mask();

    LatentMixture mix;
    mix.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    mix.means.resize(k);
    mix.covs.assign(k, 0.2 * Eigen::MatrixXd::Identity(q, q));
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd direction(q);
        double norm = 0.0;
        do {
            for (int d = 0; d < q; ++d) direction(d) = rng.normal();
            norm = direction.norm();
        } while (norm < 1e-12);
        mix.means[i] = direction / norm;  // on the unit sphere
    }
    normalize_mixture_in_place(mix);
    theta.mixture = std::move(mix);
    if (dims.m > 0) theta.mixture.eta = Eigen::MatrixXd::Zero(k - 1, dims.m + 1);
    theta.validate();
    return theta;
}

}  // namespace

Theta initialize(const CountMatrix& counts, const ModelDims& dims, InitStrategy strategy,
                 std::uint64_t seed) {
    dims.validate();
    counts.validate();
    if (counts.rows() != dims.n || counts.cols() != dims.p) {
        throw contract_error("initialize: counts shape disagrees with dims");
    }
    switch (strategy) {
        case InitStrategy::kClassicalFaWard:
            return init_classical_fa_ward(counts, dims, seed);
        case InitStrategy::kRandom:
            return init_random(counts, dims, seed);
    }
    throw contract_error("initialize: unknown strategy");
}

std::vector<int> assign_clusters(const EStepSummary& estep) {
    const Eigen::Index n = estep.log_resp.rows();
    std::vector<int> labels(n);
    for (Eigen::Index l = 0; l < n; ++l) {
        int best = 0;
        for (Eigen::Index i = 1; i < estep.log_resp.cols(); ++i) {
            if (estep.log_resp(l, i) > estep.log_resp(l, best)) best = static_cast<int>(i);
        }
        labels[l] = best;
    }
    return labels;
}

namespace {

/// Convex combination of parameter sets used by the ascent guard; alpha=1
/// returns `to`, alpha=0 returns `from`.
Theta interpolate_theta(const Theta& from, const Theta& to, double alpha) {
    Theta out = to;
    out.loadings.intercepts =
        alpha * to.loadings.intercepts + (1 - alpha) * from.loadings.intercepts;
    out.loadings.loadings = alpha * to.loadings.loadings + (1 - alpha) * from.loadings.loadings;
    out.mixture.weights = alpha * to.mixture.weights + (1 - alpha) * from.mixture.weights;
    for (int i = 0; i < out.mixture.components(); ++i) {
        out.mixture.means[i] = alpha * to.mixture.means[i] + (1 - alpha) * from.mixture.means[i];
        out.mixture.covs[i] = alpha * to.mixture.covs[i] + (1 - alpha) * from.mixture.covs[i];
    }
    if (to.mixture.eta.size() > 0) {
        out.mixture.eta = alpha * to.mixture.eta + (1 - alpha) * from.mixture.eta;
    }
    return out;
}

FitResult fit_single(const CountMatrix& counts, const ModelDims& dims, const FitConfig& config,
                     const std::optional<Eigen::MatrixXd>& design, std::uint64_t seed,
                     const std::optional<Theta>& initial) {
    const auto rule = gauss_hermite_rule(config.quadrature_points);
    const auto grid = tensor_grid(rule, dims.q, config.grid_budget);

    Theta theta = initial ? *initial : initialize(counts, dims, config.init, seed);
    if (design && theta.mixture.eta.size() == 0) {
        // seed the logit intercepts from the initial mixture weights so the
        // starting weights agree with the constant-weight parameterization
        theta.mixture.eta = Eigen::MatrixXd::Zero(dims.k - 1, dims.m + 1);
        for (int i = 0; i < dims.k - 1; ++i) {
            theta.mixture.eta(i, 0) = std::clamp(
                std::log(theta.mixture.weights(i) / theta.mixture.weights(dims.k - 1)), -30.0,
                30.0);
        }
        theta.mixture.weights = average_logit_weights(theta.mixture.eta, *design);
    }
    if (config.zero_loadings) {
        theta.loadings.loadings.setZero();
        theta.loadings.fixed_mask.setConstant(true);
        theta.loadings.fixed_mask.col(0).setConstant(false);
        theta.loadings.fixed_mask(0, 0) = config.lambda10 == Lambda10Policy::kFixed;
    }
    const bool rezero = config.lambda10 == Lambda10Policy::kFixed;

    FitResult result;
    EStepSummary estep = e_step(counts, theta, grid, design);
    result.loglik_trace.push_back(estep.loglik);
    bool converged = false;
    for (int iter = 0; iter < config.max_iter; ++iter) {
        Theta proposal = theta;
        proposal.loadings = m_step_loadings(estep, theta, config);
        const MixtureUpdate mix = m_step_mixture(estep);
        proposal.mixture.means = mix.means;
        proposal.mixture.covs = mix.covs;
        if (design) {
            proposal.mixture.eta = m_step_eta(estep, *design, theta.mixture.eta);
            proposal.mixture.weights = average_logit_weights(proposal.mixture.eta, *design);
        } else {
            proposal.mixture.weights = mix.weights;
        }

        // GEM guard: the trace reports the quadrature likelihood, so back
        // off towards the current point on the rare decrease. The accepted
        // candidate's E-step is reused by the next iteration.
        double alpha = 1.0;
        bool accepted = false;
        for (int half = 0; half <= 24; ++half) {
            Theta candidate = restandardize(interpolate_theta(theta, proposal, alpha));
            if (rezero) candidate = rezero_first_intercept(candidate);
            EStepSummary cand_estep = e_step(counts, candidate, grid, design);
            if (cand_estep.loglik >= estep.loglik - 1e-9 * (std::abs(estep.loglik) + 1.0)) {
                theta = std::move(candidate);
                estep = std::move(cand_estep);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {  // no ascent direction left at float resolution
            converged = true;
            break;
        }
        result.loglik_trace.push_back(estep.loglik);
        const double prev = result.loglik_trace[result.loglik_trace.size() - 2];
        if (std::abs(estep.loglik - prev) / (std::abs(prev) + 1.0) < config.epsilon) {
            converged = true;
            break;
        }
    }

    // Final standardization: make conditions 1-3 hold exactly. Pinning the
    // first intercept is the one non-invariant move; everything reported
    // below (log-likelihood, criteria, labels, scores) is evaluated at the
    // theta actually returned.
    theta = restandardize(theta);
    if (rezero) theta.loadings.intercepts(0) = 0.0;

    EStepSummary final_estep = e_step(counts, theta, grid, design);
    result.theta = theta;
    result.loglik = final_estep.loglik;
    result.converged = converged;
    result.iterations = static_cast<int>(result.loglik_trace.size()) - 1;
    result.labels = assign_clusters(final_estep);
    result.factor_scores = Eigen::MatrixXd::Zero(counts.rows(), dims.q);
    const Eigen::MatrixXd resp = final_estep.responsibilities();
    for (int i = 0; i < dims.k; ++i) {
        result.factor_scores += resp.col(i).asDiagonal() * final_estep.cond_mean[i];
    }
    const int h = count_params(dims.p, dims.q, dims.k, dims.m);
    result.aic = aic(final_estep.loglik, h);
    result.bic = bic(final_estep.loglik, h, dims.n);
    result.estep = std::move(final_estep);
    return result;
}

}  // namespace

FitResult fit(const CountMatrix& counts, const ModelDims& dims, const FitConfig& config,
              const std::optional<Eigen::MatrixXd>& design, const std::optional<Theta>& initial) {
    config.validate();
    dims.validate();
    counts.validate();
    if (dims.m > 0 && !design) {
        throw contract_error("fit: m > 0 requires a design matrix");
    }
    if (design && (design->rows() != counts.rows() || design->cols() != dims.m + 1)) {
        throw contract_error("fit: design shape disagrees with counts and m");
    }

    std::uint64_t seed = config.seed;
    for (int attempt = 0;; ++attempt) {
        try {
            FitResult result = fit_single(counts, dims, config, design, seed, initial);
            result.restarts_used = attempt;
            return result;
        } catch (const degenerate_component_error&) {
            if (attempt >= config.max_restarts || initial) throw;
            seed = Rng::derive(config.seed, 0xD0 + static_cast<std::uint64_t>(attempt));
        }
    }
}

}  // namespace pfm
