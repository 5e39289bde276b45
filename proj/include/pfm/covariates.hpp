#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "pfm/estimation.hpp"

namespace pfm {

/// Encoded covariates: column 0 is the intercept (all ones).
struct DesignMatrix {
    Eigen::MatrixXd values;  // n x (m+1)
    std::vector<std::string> column_names;

    int rows() const { return static_cast<int>(values.rows()); }
    /// Covariate count excluding the intercept.
    int m() const { return static_cast<int>(values.cols()) - 1; }
    void validate() const;
};

/// Declaration of one raw covariate column.
struct CovariateSpec {
    enum class Kind { kCategorical, kMidpointNumeric };
    std::string name;
    Kind kind = Kind::kCategorical;
    std::vector<std::string> levels;       // first level is the reference
    std::vector<double> midpoints;         // aligned with levels for midpoint kind
};

struct CovariateSchema {
    std::vector<CovariateSpec> covariates;

    /// Number of encoded predictor columns (excluding the intercept).
    int encoded_columns() const;
    void validate() const;
};

/// Mixture weights pi_i(x) = exp(eta_i' x) / (1 + sum_i' exp(eta_i'' x)),
/// with the last component's coefficients fixed at zero; computed in log
/// space.
Eigen::VectorXd mixture_weights_logit(const Eigen::MatrixXd& eta, const Eigen::VectorXd& x);

/// Sample-average mixture weights under the logit model; these play the
/// role of pi in the standardization constraints when covariates are
/// present.
Eigen::VectorXd average_logit_weights(const Eigen::MatrixXd& eta, const Eigen::MatrixXd& design);

/// Damped Newton-Raphson maximization of sum_l sum_i r_li log pi_i(x_l)
/// in eta, starting from eta0. Intercept-only designs use the closed-form
/// stationary point. Entries are capped at +-30 to survive separation.
Eigen::MatrixXd m_step_eta(const EStepSummary& estep, const Eigen::MatrixXd& design,
                           const Eigen::MatrixXd& eta0);

/// Raw covariate table: records[l][c] is the string value of covariate c.
using CovariateRecords = std::vector<std::vector<std::string>>;

/// Reference-category dummy coding plus midpoint mapping, with a leading
/// intercept column. Throws data_error naming row and column on unknown
/// categories.
DesignMatrix encode_covariates(const CovariateRecords& records, const CovariateSchema& schema);

/// The eight-covariate questionnaire schema (16 predictor columns).
CovariateSchema paper_covariate_schema();

}  // namespace pfm
