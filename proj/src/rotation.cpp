#include "pfm/rotation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "pfm/errors.hpp"
#include "pfm/rng.hpp"

namespace pfm {

namespace {

/// Oblimin criterion value and gradient with respect to the rotated
/// loadings L: Q = (1/4) <L^2, (I - gamma C) L^2 N> with N = ones - I and
/// C = ones/p.
double criterion(const Eigen::MatrixXd& rotated, double gamma, Eigen::MatrixXd* grad) {
    const Eigen::Index p = rotated.rows();
    const Eigen::Index q = rotated.cols();
    const Eigen::MatrixXd sq = rotated.array().square();
    Eigen::MatrixXd cross = sq * (Eigen::MatrixXd::Ones(q, q) - Eigen::MatrixXd::Identity(q, q));
    if (gamma != 0.0) {
        cross = (Eigen::MatrixXd::Identity(p, p) -
                 (gamma / static_cast<double>(p)) * Eigen::MatrixXd::Ones(p, p)) *
                cross;
    }
    if (grad) *grad = rotated.cwiseProduct(cross);
    return 0.25 * (sq.cwiseProduct(cross)).sum();
}

struct GpRun {
    Eigen::MatrixXd t;  // q x q oblique rotation, unit-norm columns
    double value = 0.0;
    bool converged = false;
};

/// Gradient projection on the oblique manifold (unit-length columns of T),
/// with the retraction X -> X diag(1/||col||) and an Armijo back-off.
GpRun gradient_projection(const Eigen::MatrixXd& loadings, Eigen::MatrixXd t, double gamma) {
    const Eigen::Index q = loadings.cols();
    constexpr int kMaxIter = 500;
    constexpr double kTol = 1e-8;

    Eigen::MatrixXd t_inv = t.inverse();
    Eigen::MatrixXd rotated = loadings * t_inv.transpose();
    Eigen::MatrixXd q_grad;
    double value = criterion(rotated, gamma, &q_grad);
    double step = 1.0;
    bool converged = false;

    for (int iter = 0; iter < kMaxIter; ++iter) {
        const Eigen::MatrixXd grad_t = -(rotated.transpose() * q_grad * t_inv).transpose();
        Eigen::MatrixXd proj = grad_t;
        for (Eigen::Index c = 0; c < q; ++c) {
            proj.col(c) -= t.col(c) * t.col(c).dot(grad_t.col(c));
        }
        const double slope = proj.squaredNorm();
        if (std::sqrt(slope) < kTol) {
            converged = true;
            break;
        }
        step *= 2.0;
        bool moved = false;
        for (int half = 0; half < 40; ++half) {
            Eigen::MatrixXd cand = t - step * proj;
            for (Eigen::Index c = 0; c < q; ++c) {
                const double norm = cand.col(c).norm();
                if (norm < 1e-12) break;
                cand.col(c) /= norm;
            }
            const Eigen::FullPivLU<Eigen::MatrixXd> lu(cand);
            if (lu.isInvertible()) {
                const Eigen::MatrixXd cand_inv = lu.inverse();
                const Eigen::MatrixXd cand_rot = loadings * cand_inv.transpose();
                Eigen::MatrixXd cand_grad;
                const double cand_value = criterion(cand_rot, gamma, &cand_grad);
                if (cand_value < value - 0.5 * slope * step) {
                    t = std::move(cand);
                    t_inv = cand_inv;
                    rotated = cand_rot;
                    q_grad = std::move(cand_grad);
                    value = cand_value;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!moved) {
            converged = true;  // no descent at float resolution
            break;
        }
    }
    return {std::move(t), value, converged};
}

}  // namespace

RotationResult oblimin_rotate(const Eigen::MatrixXd& loadings, double gamma, std::uint64_t seed,
                              int restarts) {
    const Eigen::Index p = loadings.rows();
    const Eigen::Index q = loadings.cols();
    if (q < 1 || p <= q) {
        throw contract_error("oblimin_rotate: need p > q >= 1");
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> rank_check(loadings);
    if (rank_check.rank() < q) {
        throw numerical_error("oblimin_rotate: loadings are rank deficient");
    }

    RotationResult result;
    if (q == 1) {
        result.rotated_loadings = loadings;
        result.factor_correlation = Eigen::MatrixXd::Identity(1, 1);
        result.rotation_matrix = Eigen::MatrixXd::Identity(1, 1);
        result.criterion_value = 0.0;
        result.converged = true;
        return result;
    }

    GpRun best;
    bool have_best = false;
    Rng rng(Rng::derive(seed, 0x0B11));
    for (int start = 0; start <= restarts; ++start) {
        Eigen::MatrixXd t0 = Eigen::MatrixXd::Identity(q, q);
        if (start > 0) {
            Eigen::MatrixXd raw(q, q);
            for (Eigen::Index a = 0; a < q; ++a) {
                for (Eigen::Index b = 0; b < q; ++b) raw(a, b) = rng.normal();
            }
            const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
            t0 = qr.householderQ();
        }
        GpRun run = gradient_projection(loadings, t0, gamma);
        if (!have_best || run.value < best.value - 1e-12) {
            best = std::move(run);
            have_best = true;
        }
    }

    Eigen::MatrixXd t = best.t;
    Eigen::MatrixXd rotated = loadings * t.inverse().transpose();
    // canonical column signs: largest-magnitude entry positive
    for (Eigen::Index c = 0; c < q; ++c) {
        Eigen::Index arg = 0;
        rotated.col(c).cwiseAbs().maxCoeff(&arg);
        if (rotated(arg, c) < 0.0) {
            rotated.col(c) = -rotated.col(c);
            t.col(c) = -t.col(c);
        }
    }
    result.rotated_loadings = rotated;
    result.rotation_matrix = t;
    result.factor_correlation = t.transpose() * t;
    result.factor_correlation.diagonal().setOnes();  // exact unit diagonal
    result.criterion_value = best.value;
    result.converged = best.converged;
    return result;
}

std::string loading_display(const RotationResult& result,
                            const std::vector<std::string>& row_names, double threshold) {
    const Eigen::Index p = result.rotated_loadings.rows();
    const Eigen::Index q = result.rotated_loadings.cols();
    std::size_t name_width = 8;
    for (const auto& name : row_names) name_width = std::max(name_width, name.size());

    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width) + 2) << "variable";
    for (Eigen::Index c = 0; c < q; ++c) {
        os << std::right << std::setw(10) << ("factor" + std::to_string(c + 1));
    }
    os << '\n';
    for (Eigen::Index j = 0; j < p; ++j) {
        const std::string name =
            j < static_cast<Eigen::Index>(row_names.size()) ? row_names[j]
                                                            : "v" + std::to_string(j + 1);
        os << std::left << std::setw(static_cast<int>(name_width) + 2) << name;
        for (Eigen::Index c = 0; c < q; ++c) {
            const double v = result.rotated_loadings(j, c);
            if (std::abs(v) > threshold || threshold == 0.0) {
                os << std::right << std::setw(10) << std::fixed << std::setprecision(2) << v;
            } else {
                os << std::setw(10) << "";
            }
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace pfm
