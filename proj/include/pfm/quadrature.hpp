#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace pfm {

/// One-dimensional Gauss-Hermite rule after the change of variable that
/// targets the standard normal density. Weights are rescaled by 1/sqrt(pi)
/// so they sum to one; E[g(Z)] for Z ~ N(0,1) is approximated by
/// sum_t w_t g(sqrt(2) x_t).
struct QuadratureRule {
    Eigen::VectorXd nodes;    // ascending, symmetric about 0
    Eigen::VectorXd weights;  // positive, sum to 1
};

/// Tensor product of a 1-D rule over q latent dimensions.
/// Points are enumerated row-major (last dimension fastest), each row of
/// `points` is one node in R^q; `weights` are the per-dimension products.
struct TensorGrid {
    Eigen::MatrixXd points;       // G x q
    Eigen::VectorXd weights;      // G, sums to 1
    Eigen::VectorXd log_weights;  // log(weights)
    int per_dim = 0;

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
};

/// Result of a jittered Cholesky factorization: M + jitter*I = L L^T.
struct CholeskyResult {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
};

/// Gauss-Hermite abscissas and normalized weights for T points.
/// Throws config_error unless 1 <= T <= 64.
QuadratureRule gauss_hermite_rule(int points);

/// Cartesian product grid of `rule` over q dimensions.
/// Throws config_error if T^q exceeds `budget` points.
TensorGrid tensor_grid(const QuadratureRule& rule, int q,
                       std::size_t budget = 1000000);

/// Affine map of grid points onto N(mean, cov): z* = sqrt(2) L z + mean
/// with L the (jittered) lower Cholesky factor of cov. Returns a G x q
/// matrix of transformed nodes; with the grid weights these approximate
/// expectations under N(mean, cov).
Eigen::MatrixXd transform_nodes(const TensorGrid& grid,
                                const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cov);

/// log(sum_i exp(v_i)) with max-shifting; -inf input is handled, empty
/// input throws contract_error.
double log_sum_exp(std::span<const double> values);
double log_sum_exp(const Eigen::VectorXd& values);

/// Cholesky factorization with an escalating diagonal jitter schedule
/// {0, 1e-10, 1e-8, 1e-6}. Throws numerical_error with the matrix
/// diagnostics if every jitter fails.
CholeskyResult cholesky_psd(const Eigen::MatrixXd& m);

}  // namespace pfm
