#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pfm/quadrature.hpp"

namespace pfm {

/// Problem dimensions. m counts covariate columns excluding the intercept
/// (0 when mixture weights are constant).
struct ModelDims {
    int n = 0;  // observations
    int p = 0;  // observed count variables
    int q = 0;  // latent factors
    int k = 0;  // mixture components
    int m = 0;  // covariates (excluding intercept)

    void validate() const;
};

/// Intercepts and factor loadings of the log link, with the structural
/// zero pattern: entries (j, c) of the loading matrix with c > j are fixed
/// at zero, and the first intercept is fixed at zero.
struct Loadings {
    Eigen::VectorXd intercepts;                    // p
    Eigen::MatrixXd loadings;                      // p x q
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> fixed_mask;  // p x (q+1)

    static Loadings zeros(int p, int q);
    /// The structural mask: column 0 is the intercept, columns 1..q the
    /// loadings; true marks an entry constrained to zero.
    static Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> structural_mask(int p, int q);
    /// Zeroes every masked entry in place.
    void apply_mask();
};

/// Gaussian mixture over the latent space. `weights` always holds the
/// component weights used for standardization: the mixing proportions when
/// there are no covariates, the sample-average logit weights otherwise.
/// `eta` holds the multinomial-logit coefficients ((k-1) x (m+1)) when
/// covariates are present; the last component's coefficients are an
/// implicit zero row.
struct LatentMixture {
    Eigen::VectorXd weights;              // k
    Eigen::MatrixXd eta;                  // (k-1) x (m+1), empty when m = 0
    std::vector<Eigen::VectorXd> means;   // k of q
    std::vector<Eigen::MatrixXd> covs;    // k of q x q

    int components() const { return static_cast<int>(means.size()); }
};

/// Full parameter set.
struct Theta {
    ModelDims dims;
    Loadings loadings;
    LatentMixture mixture;

    void validate() const;
};

/// Observed counts with column names.
struct CountMatrix {
    Eigen::MatrixXi values;  // n x p, entries >= 0
    std::vector<std::string> column_names;

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }
    void validate() const;
};

/// One identifiability condition's check outcome.
struct ConditionCheck {
    std::string name;
    bool pass = false;
    double magnitude = 0.0;
};

struct IdentifiabilityReport {
    ConditionCheck mean_zero;        // condition 1a: sum_i w_i mu_i = 0
    ConditionCheck unit_variance;    // condition 1b: sum_i w_i (Sigma_i + mu_i mu_i') = I
    ConditionCheck loading_triangle; // condition 2: upper-right triangle of the loadings = 0
    ConditionCheck first_intercept;  // condition 3: lambda_{10} = 0

    bool all_pass() const {
        return mean_zero.pass && unit_variance.pass && loading_triangle.pass &&
               first_intercept.pass;
    }
    std::string to_string() const;
};

/// Poisson rates of the observation layer: omega_j = exp(lambda_{j0} + Lambda_j z).
/// Throws numerical_error if a linear predictor exceeds 700.
Eigen::VectorXd link_rates(const Loadings& loadings, const Eigen::VectorXd& z);

/// log f(y | rates) for one observation under independent Poissons.
double poisson_row_loglik(const Eigen::VectorXi& y, const Eigen::VectorXd& rates);

/// log f(y | s_i = 1): quadrature approximation of the component marginal,
/// computed in log space. Returns -inf if the observation is impossible
/// under the component.
double component_marginal_loglik(const Eigen::VectorXi& y, int component,
                                 const Theta& theta, const TensorGrid& grid);

/// n x k matrix of component log marginals for every observation. The
/// single code path shared by observed_loglik and the E-step.
Eigen::MatrixXd component_log_marginals(const CountMatrix& counts, const Theta& theta,
                                        const TensorGrid& grid);

/// Observed-data log-likelihood. `design` must be supplied iff dims.m > 0;
/// its rows provide the covariate vectors for the logit mixture weights.
double observed_loglik(const CountMatrix& counts, const Theta& theta, const TensorGrid& grid,
                       const std::optional<Eigen::MatrixXd>& design = std::nullopt);

/// Checks conditions 1-3 and reports the measured violation magnitudes.
IdentifiabilityReport check_identifiability(const Theta& theta, double tol);

/// Per-row sum of log(y_j!) via log-gamma, cached over distinct count values.
Eigen::VectorXd log_factorial_row_sums(const Eigen::MatrixXi& counts);

}  // namespace pfm
