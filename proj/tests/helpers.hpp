#pragma once

#include <cmath>
#include <vector>

#include "pfm/estimation.hpp"
#include "pfm/model.hpp"
#include "pfm/quadrature.hpp"
#include "pfm/rng.hpp"
#include "pfm/simulation.hpp"

namespace pfm::test {

/// Random exactly-standardized Theta for invariance tests.
inline Theta random_theta(int p, int q, int k, std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x7E57));
    Theta theta;
    theta.dims = {100, p, q, k, 0};
    theta.loadings = Loadings::zeros(p, q);
    for (int j = 0; j < p; ++j) {
        theta.loadings.intercepts(j) = rng.uniform(-0.6, 0.6);
        for (int c = 0; c < q; ++c) theta.loadings.loadings(j, c) = rng.uniform(-0.9, 0.9);
    }
    theta.loadings.apply_mask();

    LatentMixture mix;
    mix.weights.resize(k);
    for (int i = 0; i < k; ++i) mix.weights(i) = rng.uniform(0.5, 1.5);
    mix.weights /= mix.weights.sum();
    mix.means.resize(k);
    mix.covs.resize(k);
    for (int i = 0; i < k; ++i) {
        mix.means[i] = Eigen::VectorXd::Zero(q);
        for (int d = 0; d < q; ++d) mix.means[i](d) = rng.normal();
        Eigen::MatrixXd a(q, q);
        for (int r = 0; r < q; ++r) {
            for (int c = 0; c < q; ++c) a(r, c) = 0.3 * rng.normal();
        }
        mix.covs[i] = a * a.transpose() + 0.15 * Eigen::MatrixXd::Identity(q, q);
    }
    // standardize exactly (mixture side only, no likelihood obligation here)
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
    theta.mixture = std::move(mix);
    theta.validate();
    return theta;
}

/// Dense-grid numeric oracle for the q = 1 component marginal:
/// log of the trapezoid integral of f(y|z) phi(z; mu, sigma2) over
/// mu +- 10 sd with `points` nodes. Independent of the quadrature path.
inline double dense_marginal_oracle(const Eigen::VectorXi& y, const Eigen::VectorXd& intercepts,
                                    const Eigen::VectorXd& loading_col, double mu, double sigma2,
                                    int points = 10000) {
    const double sd = std::sqrt(sigma2);
    const double lo = mu - 10.0 * sd;
    const double hi = mu + 10.0 * sd;
    const double h = (hi - lo) / (points - 1);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> logvals(points);
    for (int t = 0; t < points; ++t) {
        const double z = lo + t * h;
        double ll = -0.5 * std::log(2.0 * M_PI * sigma2) - 0.5 * (z - mu) * (z - mu) / sigma2;
        for (Eigen::Index j = 0; j < y.size(); ++j) {
            const double lin = intercepts(j) + loading_col(j) * z;
            ll += y(j) * lin - std::exp(lin) - std::lgamma(y(j) + 1.0);
        }
        logvals[t] = ll;
        best = std::max(best, ll);
    }
    double sum = 0.0;
    for (int t = 0; t < points; ++t) {
        const double w = (t == 0 || t == points - 1) ? 0.5 : 1.0;
        sum += w * std::exp(logvals[t] - best);
    }
    return best + std::log(sum * h);
}

/// Exhaustive pair-counting Rand statistics (oracle for the adjusted
/// Rand index).
inline double brute_force_ari(const std::vector<int>& a, const std::vector<int>& b) {
    const int n = static_cast<int>(a.size());
    double n11 = 0, n00 = 0, n10 = 0, n01 = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const bool same_a = a[i] == a[j];
            const bool same_b = b[i] == b[j];
            if (same_a && same_b) ++n11;
            else if (!same_a && !same_b) ++n00;
            else if (same_a) ++n10;
            else ++n01;
        }
    }
    const double total = n11 + n00 + n10 + n01;
    const double expected = (n11 + n10) * (n11 + n01) / total;
    const double maximum = 0.5 * ((n11 + n10) + (n11 + n01));
    if (maximum == expected) return n11 == expected ? 1.0 : 0.0;
    return (n11 - expected) / (maximum - expected);
}

/// All label vectors of length n over at most n labels, in canonical form
/// (restricted growth strings): every partition of {1..n} exactly once.
inline void enumerate_partitions(int n, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> labels(n, 0);
    const std::function<void(int, int)> rec = [&](int pos, int maxused) {
        if (pos == n) {
            fn(labels);
            return;
        }
        for (int v = 0; v <= maxused + 1 && v < n; ++v) {
            labels[pos] = v;
            rec(pos + 1, std::max(maxused, v));
        }
    };
    rec(0, -1);
}

}  // namespace pfm::test
