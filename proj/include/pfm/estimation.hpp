#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pfm/model.hpp"
#include "pfm/quadrature.hpp"

namespace pfm {

/// E-step products. Beyond the posterior responsibilities and conditional
/// latent moments, it carries the per-component quadrature sufficient
/// statistics the loading update consumes:
///   nodes[i]        G x q transformed quadrature nodes of component i,
///   node_mass[i]    G     sum_l r_li w~_lit (posterior node weights),
///   node_counts[i]  p x G sum_l r_li w~_lit y_lj.
struct EStepSummary {
    Eigen::MatrixXd log_resp;                   // n x k
    std::vector<Eigen::MatrixXd> cond_mean;     // k matrices, n x q
    std::vector<Eigen::MatrixXd> cond_second;   // k matrices, n x q*q (row-major per obs)
    Eigen::VectorXd per_obs_loglik;             // n

    std::vector<Eigen::MatrixXd> nodes;         // k of G x q
    std::vector<Eigen::VectorXd> node_mass;     // k of G
    std::vector<Eigen::MatrixXd> node_counts;   // k of p x G

    double loglik = 0.0;
    Eigen::MatrixXd responsibilities() const { return log_resp.array().exp(); }
};

enum class InitStrategy { kClassicalFaWard, kRandom };

/// How the lambda_{10} = 0 constraint is carried through the fit.
///   kFixed: the first intercept is excluded from the Newton update, each
///           restandardization re-zeroes it by a likelihood-preserving
///           rigid translation of the component means, and the final
///           standardization pins it exactly.
///   kFree:  condition 3 is dropped; the first intercept is estimated like
///           any other.
enum class Lambda10Policy { kFixed, kFree };

struct FitConfig {
    int quadrature_points = 8;      // T per latent dimension
    int max_iter = 500;
    double epsilon = 1e-6;          // relative log-likelihood tolerance
    int newton_steps_per_m = 1;
    int newton_max_halvings = 20;
    std::uint64_t seed = 1;
    InitStrategy init = InitStrategy::kClassicalFaWard;
    Lambda10Policy lambda10 = Lambda10Policy::kFixed;
    std::size_t grid_budget = 1000000;
    int max_restarts = 5;           // rescue attempts after a degenerate component
    bool zero_loadings = false;     // mask the whole loading matrix (independent Poissons)

    void validate() const;
};

struct FitResult {
    Theta theta;
    std::vector<double> loglik_trace;  // one entry per EM iteration, non-decreasing
    double loglik = 0.0;               // at the final (standardized) theta
    bool converged = false;
    int iterations = 0;
    std::vector<int> labels;           // 0-based component labels
    Eigen::MatrixXd factor_scores;     // n x q posterior means E(z | y)
    double aic = 0.0;
    double bic = 0.0;
    EStepSummary estep;                // at the final theta
    int restarts_used = 0;
};

/// Posterior responsibilities and conditional latent moments at `theta`.
/// Throws numerical_error naming the row if an observation has zero
/// likelihood under every component.
EStepSummary e_step(const CountMatrix& counts, const Theta& theta, const TensorGrid& grid,
                    const std::optional<Eigen::MatrixXd>& design = std::nullopt);

/// Damped Newton ascent on the expected complete-data log-likelihood for
/// (lambda_0, Lambda), one variable at a time; masked entries stay zero.
/// Guarantees the expected objective does not decrease.
Loadings m_step_loadings(const EStepSummary& estep, const Theta& theta, const FitConfig& config);

struct MixtureUpdate {
    Eigen::VectorXd weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
};

/// Closed-form responsibility-weighted updates of (pi, mu_i, Sigma_i).
/// Throws degenerate_component_error if a component's total responsibility
/// falls below 1e-6 * n.
MixtureUpdate m_step_mixture(const EStepSummary& estep);

/// Centers and scales the latent mixture to mean zero / identity variance
/// with the compensating loading and intercept transforms, so the observed
/// log-likelihood is unchanged. Conditions 1 and 2 hold exactly on output.
Theta restandardize(const Theta& theta);

/// Re-zeroes the first intercept by a rigid translation of the component
/// means along the first loading row (likelihood-preserving). No-op when
/// that row is zero or the intercept is already zero.
Theta rezero_first_intercept(const Theta& theta);

/// Starting values. `classical-fa+ward` seeds the loadings from a
/// principal-factor decomposition of the correlation of log(1+y) and the
/// mixture from Ward groups of provisional factor scores; `random` draws
/// masked Gaussian loadings and component means on the unit sphere. Both
/// return an exactly standardized Theta and are deterministic given seed.
Theta initialize(const CountMatrix& counts, const ModelDims& dims, InitStrategy strategy,
                 std::uint64_t seed);

/// Runs the generalized EM loop until the relative log-likelihood change
/// drops below epsilon or max_iter is reached. `initial` overrides the
/// seeded initialization (used by equivariance tests and warm starts).
FitResult fit(const CountMatrix& counts, const ModelDims& dims, const FitConfig& config,
              const std::optional<Eigen::MatrixXd>& design = std::nullopt,
              const std::optional<Theta>& initial = std::nullopt);

/// Highest-responsibility labels; ties break to the lowest index.
std::vector<int> assign_clusters(const EStepSummary& estep);

namespace detail {

/// Expected complete-data objective for one variable's coefficient vector
/// (intercept first), given the E-step node statistics. Exposed for
/// gradient checks.
double loading_row_objective(const EStepSummary& estep, int variable,
                             const Eigen::VectorXd& coef);

/// Analytic gradient of loading_row_objective.
Eigen::VectorXd loading_row_gradient(const EStepSummary& estep, int variable,
                                     const Eigen::VectorXd& coef);

/// One damped Newton update of a single variable's free coefficients.
Eigen::VectorXd newton_loading_row(const EStepSummary& estep, int variable,
                                   const Eigen::VectorXd& coef,
                                   const std::vector<bool>& free_coef, int max_halvings);

}  // namespace detail

}  // namespace pfm
