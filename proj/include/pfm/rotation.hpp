#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace pfm {

/// Oblique rotation output. The reconstruction identity
/// rotated_loadings * rotation_matrix^T = original loadings holds, and
/// factor_correlation = rotation_matrix^T rotation_matrix.
struct RotationResult {
    Eigen::MatrixXd rotated_loadings;    // p x q
    Eigen::MatrixXd factor_correlation;  // q x q, unit diagonal
    Eigen::MatrixXd rotation_matrix;     // q x q
    double criterion_value = 0.0;
    bool converged = false;
};

/// Minimizes the oblimin criterion (gamma = 0 is quartimin) over oblique
/// rotations by gradient projection, from the identity start plus
/// `restarts` random orthonormal starts; the best local minimum wins and
/// column signs are canonicalized (largest-magnitude entry positive).
/// q = 1 returns the input unchanged with a unit factor correlation.
RotationResult oblimin_rotate(const Eigen::MatrixXd& loadings, double gamma = 0.0,
                              std::uint64_t seed = 1, int restarts = 10);

/// Aligned text table of the rotated loadings; entries with
/// |value| <= threshold print blank (a threshold of zero prints all).
std::string loading_display(const RotationResult& result,
                            const std::vector<std::string>& row_names,
                            double threshold = 0.2);

}  // namespace pfm
