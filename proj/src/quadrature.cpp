#include "pfm/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "pfm/errors.hpp"

namespace pfm {

QuadratureRule gauss_hermite_rule(int points) {
    if (points < 1 || points > 64) {
        std::ostringstream os;
        os << "gauss_hermite_rule: points must be in [1, 64], got " << points;
        throw config_error(os.str());
    }
    const int T = points;
    QuadratureRule rule;
    rule.nodes = Eigen::VectorXd::Zero(T);
    rule.weights = Eigen::VectorXd::Zero(T);
    if (T == 1) {
        rule.weights(0) = 1.0;
        return rule;
    }

    // Golub-Welsch on the Jacobi matrix of the physicists' Hermite
    // recurrence: off-diagonal b_i = sqrt(i/2). The squared first
    // eigenvector components are the weights divided by sqrt(pi), i.e.
    // already normalized to sum 1.
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(T, T);
    for (int i = 1; i < T; ++i) {
        const double b = std::sqrt(i / 2.0);
        jacobi(i, i - 1) = b;
        jacobi(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    if (es.info() != Eigen::Success) {
        throw numerical_error("gauss_hermite_rule: eigen decomposition failed");
    }
    rule.nodes = es.eigenvalues();  // ascending
    for (int i = 0; i < T; ++i) {
        const double v = es.eigenvectors()(0, i);
        rule.weights(i) = v * v;
    }

    // Enforce exact symmetry: average mirrored pairs, pin the middle
    // node of odd rules to zero, renormalize.
    for (int i = 0; i < T / 2; ++i) {
        const int j = T - 1 - i;
        const double x = 0.5 * (rule.nodes(j) - rule.nodes(i));
        rule.nodes(i) = -x;
        rule.nodes(j) = x;
        const double w = 0.5 * (rule.weights(i) + rule.weights(j));
        rule.weights(i) = w;
        rule.weights(j) = w;
    }
    if (T % 2 == 1) rule.nodes(T / 2) = 0.0;
    rule.weights /= rule.weights.sum();
    return rule;
}

TensorGrid tensor_grid(const QuadratureRule& rule, int q, std::size_t budget) {
    if (q < 1) throw contract_error("tensor_grid: q must be >= 1");
    const auto T = static_cast<std::size_t>(rule.nodes.size());
    std::size_t total = 1;
    for (int d = 0; d < q; ++d) {
        if (total > budget / T) {
            std::ostringstream os;
            os << "tensor_grid: T=" << T << ", q=" << q << " exceeds the node budget of "
               << budget << " points";
            throw config_error(os.str());
        }
        total *= T;
    }

    TensorGrid grid;
    grid.per_dim = static_cast<int>(T);
    const auto G = static_cast<Eigen::Index>(total);
    grid.points.resize(G, q);
    grid.weights.resize(G);
    std::vector<Eigen::Index> idx(q, 0);
    for (Eigen::Index g = 0; g < G; ++g) {
        double w = 1.0;
        for (int d = 0; d < q; ++d) {
            grid.points(g, d) = rule.nodes(idx[d]);
            w *= rule.weights(idx[d]);
        }
        grid.weights(g) = w;
        for (int d = q - 1; d >= 0; --d) {  // row-major: last dim fastest
            if (++idx[d] < static_cast<Eigen::Index>(T)) break;
            idx[d] = 0;
        }
    }
    grid.log_weights = grid.weights.array().log();
    return grid;
}

Eigen::MatrixXd transform_nodes(const TensorGrid& grid, const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cov) {
    if (mean.size() != grid.dim() || cov.rows() != grid.dim() || cov.cols() != grid.dim()) {
        throw contract_error("transform_nodes: dimension mismatch between grid and moments");
    }
    const auto chol = cholesky_psd(cov);
    Eigen::MatrixXd out = std::numbers::sqrt2 * grid.points * chol.lower.transpose();
    out.rowwise() += mean.transpose();
    return out;
}

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) throw contract_error("log_sum_exp: empty input");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : values) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;  // all -inf (or a +inf dominates)
    double s = 0.0;
    for (double v : values) s += std::exp(v - mx);
    return mx + std::log(s);
}

double log_sum_exp(const Eigen::VectorXd& values) {
    return log_sum_exp(std::span<const double>(values.data(),
                                               static_cast<std::size_t>(values.size())));
}

CholeskyResult cholesky_psd(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw contract_error("cholesky_psd: matrix not square");
    static constexpr double kJitters[] = {0.0, 1e-10, 1e-8, 1e-6};
    for (double jitter : kJitters) {
        Eigen::MatrixXd shifted = m;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            // LLT can "succeed" on barely-indefinite input; require finite output.
            Eigen::MatrixXd lower = llt.matrixL();
            if (lower.allFinite()) return {std::move(lower), jitter};
        }
    }
    std::ostringstream os;
    os << "cholesky_psd: factorization failed after jitter escalation; diagonal = [";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        os << m(i, i) << (i + 1 < m.rows() ? ", " : "]");
    }
    throw numerical_error(os.str());
}

}  // namespace pfm
