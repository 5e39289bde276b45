#include "pfm/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pfm/errors.hpp"
#include "pfm/quadrature.hpp"

namespace pfm {

namespace {
constexpr double kEtaCap = 30.0;
}

void DesignMatrix::validate() const {
    if (values.rows() < 1 || values.cols() < 1) throw data_error("DesignMatrix: empty");
    if ((values.col(0).array() != 1.0).any()) {
        throw data_error("DesignMatrix: first column must be the all-ones intercept");
    }
    if (!values.allFinite()) throw data_error("DesignMatrix: non-finite entries");
    if (!column_names.empty() &&
        static_cast<int>(column_names.size()) != static_cast<int>(values.cols())) {
        throw data_error("DesignMatrix: column name count disagrees with the matrix");
    }
}

int CovariateSchema::encoded_columns() const {
    int cols = 0;
    for (const auto& c : covariates) {
        cols += c.kind == CovariateSpec::Kind::kCategorical
                    ? static_cast<int>(c.levels.size()) - 1
                    : 1;
    }
    return cols;
}

void CovariateSchema::validate() const {
    for (const auto& c : covariates) {
        if (c.name.empty()) throw config_error("CovariateSchema: unnamed covariate");
        if (c.levels.size() < 2 && c.kind == CovariateSpec::Kind::kCategorical) {
            throw config_error("CovariateSchema: categorical covariate '" + c.name +
                               "' needs at least two levels");
        }
        if (c.kind == CovariateSpec::Kind::kMidpointNumeric &&
            c.midpoints.size() != c.levels.size()) {
            throw config_error("CovariateSchema: midpoint covariate '" + c.name +
                               "' must map every level");
        }
    }
}

Eigen::VectorXd mixture_weights_logit(const Eigen::MatrixXd& eta, const Eigen::VectorXd& x) {
    const int k = static_cast<int>(eta.rows()) + 1;
    if (k > 1 && eta.cols() != x.size()) {
        throw contract_error("mixture_weights_logit: eta and x dimensions disagree");
    }
    Eigen::VectorXd logits(k);
    logits.head(k - 1) = eta * x;
    logits(k - 1) = 0.0;
    const double norm = log_sum_exp(logits);
    return (logits.array() - norm).exp();
}

Eigen::VectorXd average_logit_weights(const Eigen::MatrixXd& eta,
                                      const Eigen::MatrixXd& design) {
    const int k = static_cast<int>(eta.rows()) + 1;
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(k);
    for (Eigen::Index l = 0; l < design.rows(); ++l) {
        avg += mixture_weights_logit(eta, design.row(l).transpose());
    }
    return avg / static_cast<double>(design.rows());
}

namespace {

double eta_objective(const Eigen::MatrixXd& resp, const Eigen::MatrixXd& design,
                     const Eigen::MatrixXd& eta) {
    const int k = static_cast<int>(resp.cols());
    double value = 0.0;
    Eigen::VectorXd logits(k);
    for (Eigen::Index l = 0; l < design.rows(); ++l) {
        logits.head(k - 1) = eta * design.row(l).transpose();
        logits(k - 1) = 0.0;
        const double norm = log_sum_exp(logits);
        value += resp.row(l).dot(logits) - norm;  // resp rows sum to 1
    }
    return value;
}

}  // namespace

Eigen::MatrixXd m_step_eta(const EStepSummary& estep, const Eigen::MatrixXd& design,
                           const Eigen::MatrixXd& eta0) {
    const Eigen::MatrixXd resp = estep.responsibilities();
    const int k = static_cast<int>(resp.cols());
    const int d = static_cast<int>(design.cols());
    if (k < 2) return Eigen::MatrixXd(0, d);
    if (design.rows() != resp.rows()) {
        throw contract_error("m_step_eta: design rows disagree with responsibilities");
    }

    // Intercept-only: closed-form stationary point eta_i0 = log(rbar_i / rbar_k).
    if (d == 1) {
        const Eigen::VectorXd rbar =
            resp.colwise().mean().cwiseMax(1e-300).transpose();
        Eigen::MatrixXd eta(k - 1, 1);
        for (int i = 0; i < k - 1; ++i) {
            eta(i, 0) = std::clamp(std::log(rbar(i) / rbar(k - 1)), -kEtaCap, kEtaCap);
        }
        return eta;
    }

    const int dim = (k - 1) * d;
    Eigen::MatrixXd eta = eta0.rows() == k - 1 && eta0.cols() == d
                              ? eta0
                              : Eigen::MatrixXd::Zero(k - 1, d);
    double value = eta_objective(resp, design, eta);

    for (int iter = 0; iter < 50; ++iter) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd logits(k);
        for (Eigen::Index l = 0; l < design.rows(); ++l) {
            const Eigen::VectorXd x = design.row(l).transpose();
            logits.head(k - 1) = eta * x;
            logits(k - 1) = 0.0;
            const double norm = log_sum_exp(logits);
            const Eigen::VectorXd pi = (logits.array() - norm).exp();
            for (int i = 0; i < k - 1; ++i) {
                grad.segment(i * d, d) += (resp(l, i) - pi(i)) * x;
                for (int i2 = 0; i2 < k - 1; ++i2) {
                    const double w = pi(i) * ((i == i2 ? 1.0 : 0.0) - pi(i2));
                    hess.block(i * d, i2 * d, d, d) -= w * (x * x.transpose());
                }
            }
        }
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) break;

        hess.diagonal().array() -= 1e-6;  // ridge for collinear dummies
        const Eigen::LDLT<Eigen::MatrixXd> solver(-hess);
        if (solver.info() != Eigen::Success) {
            throw numerical_error("m_step_eta: Hessian factorization failed after ridge");
        }
        const Eigen::VectorXd step = solver.solve(grad);

        double alpha = 1.0;
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            Eigen::MatrixXd cand = eta;
            for (int i = 0; i < k - 1; ++i) {
                cand.row(i) += alpha * step.segment(i * d, d).transpose();
            }
            cand = cand.cwiseMax(-kEtaCap).cwiseMin(kEtaCap);  // separation guard
            const double cand_value = eta_objective(resp, design, cand);
            if (cand_value >= value) {
                eta = std::move(cand);
                value = cand_value;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // at a (possibly capped) stationary point
    }
    return eta;
}

DesignMatrix encode_covariates(const CovariateRecords& records, const CovariateSchema& schema) {
    schema.validate();
    const int n = static_cast<int>(records.size());
    if (n == 0) throw data_error("encode_covariates: no records");
    const int ncov = static_cast<int>(schema.covariates.size());
    const int m = schema.encoded_columns();

    DesignMatrix design;
    design.values = Eigen::MatrixXd::Zero(n, m + 1);
    design.values.col(0).setOnes();
    design.column_names.push_back("intercept");
    for (const auto& c : schema.covariates) {
        if (c.kind == CovariateSpec::Kind::kCategorical) {
            for (std::size_t lev = 1; lev < c.levels.size(); ++lev) {
                design.column_names.push_back(c.name + "=" + c.levels[lev]);
            }
        } else {
            design.column_names.push_back(c.name);
        }
    }

    for (int l = 0; l < n; ++l) {
        if (static_cast<int>(records[l].size()) != ncov) {
            std::ostringstream os;
            os << "encode_covariates: row " << l + 1 << " has " << records[l].size()
               << " fields, expected " << ncov;
            throw data_error(os.str());
        }
        int col = 1;
        for (int c = 0; c < ncov; ++c) {
            const auto& spec = schema.covariates[c];
            const auto it = std::find(spec.levels.begin(), spec.levels.end(), records[l][c]);
            if (it == spec.levels.end()) {
                std::ostringstream os;
                os << "encode_covariates: row " << l + 1 << ", covariate '" << spec.name
                   << "': unknown category '" << records[l][c] << "'";
                throw data_error(os.str());
            }
            const int lev = static_cast<int>(it - spec.levels.begin());
            if (spec.kind == CovariateSpec::Kind::kCategorical) {
                if (lev > 0) design.values(l, col + lev - 1) = 1.0;
                col += static_cast<int>(spec.levels.size()) - 1;
            } else {
                design.values(l, col) = spec.midpoints[lev];
                col += 1;
            }
        }
    }
    design.validate();
    return design;
}

CovariateSchema paper_covariate_schema() {
    using Kind = CovariateSpec::Kind;
    CovariateSchema schema;
    schema.covariates = {
        {"family_origin", Kind::kCategorical, {"Italy", "Mixed", "Abroad"}, {}},
        {"diploma", Kind::kCategorical, {"Lyceum", "Professional", "Technical"}, {}},
        {"campus", Kind::kCategorical, {"South", "Central", "North"}, {}},
        {"gender", Kind::kCategorical, {"Female", "Male", "Other"}, {}},
        {"study_area", Kind::kCategorical,
         {"Healthcare", "Scientific", "Social", "Humanities"}, {}},
        {"worker", Kind::kCategorical, {"No", "Yes"}, {}},
        {"social_class", Kind::kCategorical, {"Low", "Middle", "High", "NA"}, {}},
        {"books_read", Kind::kMidpointNumeric,
         {"None", "Less than five", "Between five and ten", "More than ten"},
         {0.0, 2.5, 7.5, 15.0}},
    };
    return schema;
}

}  // namespace pfm
