#include "pfm/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "pfm/errors.hpp"
#include "pfm/selection.hpp"

namespace pfm {

namespace {
constexpr double kLinearPredictorMax = 700.0;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

void ModelDims::validate() const {
    std::ostringstream os;
    if (n < 1 || p < 1 || q < 1 || k < 1 || m < 0) {
        os << "ModelDims: need n,p,q,k >= 1 and m >= 0; got n=" << n << " p=" << p << " q=" << q
           << " k=" << k << " m=" << m;
        throw contract_error(os.str());
    }
    const int qmax = ledermann_max_q(p);
    if (q > qmax) {
        os << "ModelDims: q=" << q << " exceeds the Ledermann bound " << qmax << " for p=" << p;
        throw config_error(os.str());
    }
}

Loadings Loadings::zeros(int p, int q) {
    Loadings l;
    l.intercepts = Eigen::VectorXd::Zero(p);
    l.loadings = Eigen::MatrixXd::Zero(p, q);
    l.fixed_mask = structural_mask(p, q);
    return l;
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> Loadings::structural_mask(int p, int q) {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(p, q + 1);
    mask.setConstant(false);
    mask(0, 0) = true;  // lambda_{10} = 0
    for (int j = 0; j < p; ++j) {
        for (int c = 0; c < q; ++c) {
            if (c > j) mask(j, c + 1) = true;  // upper-right triangle of the loadings
        }
    }
    return mask;
}

void Loadings::apply_mask() {
    const int p = static_cast<int>(intercepts.size());
    const int q = static_cast<int>(loadings.cols());
    for (int j = 0; j < p; ++j) {
        if (fixed_mask(j, 0)) intercepts(j) = 0.0;
        for (int c = 0; c < q; ++c) {
            if (fixed_mask(j, c + 1)) loadings(j, c) = 0.0;
        }
    }
}

void Theta::validate() const {
    dims.validate();
    std::ostringstream os;
    if (loadings.intercepts.size() != dims.p || loadings.loadings.rows() != dims.p ||
        loadings.loadings.cols() != dims.q) {
        throw contract_error("Theta: loading shapes disagree with dims");
    }
    if (mixture.components() != dims.k || static_cast<int>(mixture.covs.size()) != dims.k ||
        mixture.weights.size() != dims.k) {
        throw contract_error("Theta: mixture sizes disagree with dims");
    }
    for (int i = 0; i < dims.k; ++i) {
        if (mixture.means[i].size() != dims.q || mixture.covs[i].rows() != dims.q ||
            mixture.covs[i].cols() != dims.q) {
            throw contract_error("Theta: mixture component shapes disagree with dims");
        }
    }
    if (mixture.eta.size() > 0 &&
        (mixture.eta.rows() != dims.k - 1 || mixture.eta.cols() != dims.m + 1)) {
        os << "Theta: eta must be (k-1) x (m+1) = " << dims.k - 1 << " x " << dims.m + 1
           << ", got " << mixture.eta.rows() << " x " << mixture.eta.cols();
        throw contract_error(os.str());
    }
    if (dims.m > 0 && mixture.eta.size() == 0) {
        throw contract_error("Theta: m > 0 requires logit coefficients");
    }
}

void CountMatrix::validate() const {
    if (values.rows() < 1 || values.cols() < 1) {
        throw data_error("CountMatrix: empty matrix");
    }
    if (!column_names.empty() && static_cast<int>(column_names.size()) != cols()) {
        throw data_error("CountMatrix: column name count disagrees with the matrix");
    }
    if ((values.array() < 0).any()) {
        throw data_error("CountMatrix: negative entries are not counts");
    }
}

Eigen::VectorXd link_rates(const Loadings& loadings, const Eigen::VectorXd& z) {
    if (z.size() != loadings.loadings.cols()) {
        throw contract_error("link_rates: z dimension disagrees with the loadings");
    }
    Eigen::VectorXd lin = loadings.intercepts + loadings.loadings * z;
    for (Eigen::Index j = 0; j < lin.size(); ++j) {
        if (!(lin(j) <= kLinearPredictorMax)) {
            std::ostringstream os;
            os << "link_rates: linear predictor overflow at variable " << j
               << " (value " << lin(j) << ")";
            throw numerical_error(os.str());
        }
    }
    return lin.array().exp();
}

double poisson_row_loglik(const Eigen::VectorXi& y, const Eigen::VectorXd& rates) {
    if (y.size() != rates.size()) {
        throw contract_error("poisson_row_loglik: length mismatch");
    }
    double ll = 0.0;
    for (Eigen::Index j = 0; j < y.size(); ++j) {
        if (!(rates(j) > 0.0)) throw contract_error("poisson_row_loglik: rates must be positive");
        ll += y(j) * std::log(rates(j)) - rates(j) - std::lgamma(y(j) + 1.0);
    }
    return ll;
}

Eigen::VectorXd log_factorial_row_sums(const Eigen::MatrixXi& counts) {
    const int maxval = counts.size() > 0 ? counts.maxCoeff() : 0;
    Eigen::VectorXd table(maxval + 1);
    for (int v = 0; v <= maxval; ++v) table(v) = std::lgamma(v + 1.0);
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(counts.rows());
    for (Eigen::Index l = 0; l < counts.rows(); ++l) {
        for (Eigen::Index j = 0; j < counts.cols(); ++j) sums(l) += table(counts(l, j));
    }
    return sums;
}

namespace {

/// Log marginals of all observations under one component:
///   log sum_t w_t f(y | z*_t)  with  z*_t = sqrt(2) L_i z_t + mu_i.
/// `log_rates` receives the p x G linear predictors for reuse by callers.
Eigen::VectorXd component_log_marginals_impl(const Eigen::MatrixXi& counts,
                                             const Eigen::VectorXd& log_fact_rows,
                                             const Theta& theta, const TensorGrid& grid,
                                             int component, Eigen::MatrixXd* nodes_out) {
    const Eigen::MatrixXd nodes =
        transform_nodes(grid, theta.mixture.means[component], theta.mixture.covs[component]);
    Eigen::MatrixXd lin = theta.loadings.loadings * nodes.transpose();  // p x G
    lin.colwise() += theta.loadings.intercepts;
    const double mx = lin.maxCoeff();
    if (!(mx <= kLinearPredictorMax)) {
        Eigen::Index jbad = 0, tbad = 0;
        lin.maxCoeff(&jbad, &tbad);
        std::ostringstream os;
        os << "component_marginal_loglik: linear predictor overflow at variable " << jbad
           << " (value " << mx << ") in component " << component;
        throw numerical_error(os.str());
    }
    const Eigen::VectorXd rate_sums = lin.array().exp().colwise().sum();  // G
    // log f(y_l | z*_t) = y_l . lin_t - sum_j rate_jt - log(y_l!)
    Eigen::MatrixXd ll = (counts.cast<double>() * lin).rowwise() - rate_sums.transpose();
    ll.rowwise() += grid.log_weights.transpose();
    Eigen::VectorXd out(counts.rows());
    for (Eigen::Index l = 0; l < counts.rows(); ++l) {
        out(l) = log_sum_exp(Eigen::VectorXd(ll.row(l))) - log_fact_rows(l);
    }
    if (nodes_out) *nodes_out = nodes;
    return out;
}

}  // namespace

double component_marginal_loglik(const Eigen::VectorXi& y, int component, const Theta& theta,
                                 const TensorGrid& grid) {
    if (component < 0 || component >= theta.dims.k) {
        throw contract_error("component_marginal_loglik: component index out of range");
    }
    Eigen::MatrixXi one(1, y.size());
    one.row(0) = y.transpose();
    const Eigen::VectorXd lf = log_factorial_row_sums(one);
    return component_log_marginals_impl(one, lf, theta, grid, component, nullptr)(0);
}

Eigen::MatrixXd component_log_marginals(const CountMatrix& counts, const Theta& theta,
                                        const TensorGrid& grid) {
    const Eigen::VectorXd lf = log_factorial_row_sums(counts.values);
    Eigen::MatrixXd lm(counts.rows(), theta.dims.k);
    for (int i = 0; i < theta.dims.k; ++i) {
        lm.col(i) = component_log_marginals_impl(counts.values, lf, theta, grid, i, nullptr);
    }
    return lm;
}

double observed_loglik(const CountMatrix& counts, const Theta& theta, const TensorGrid& grid,
                       const std::optional<Eigen::MatrixXd>& design) {
    if (theta.dims.m > 0 && !design) {
        throw contract_error("observed_loglik: m > 0 requires a design matrix");
    }
    if (design && design->cols() != theta.dims.m + 1) {
        throw contract_error("observed_loglik: design columns must equal m + 1");
    }
    if (counts.cols() != theta.dims.p) {
        throw contract_error("observed_loglik: count columns disagree with dims");
    }
    const Eigen::MatrixXd lm = component_log_marginals(counts, theta, grid);
    const int k = theta.dims.k;
    double total = 0.0;
    if (!design) {
        const Eigen::VectorXd logpi = theta.mixture.weights.array().log();
        for (Eigen::Index l = 0; l < lm.rows(); ++l) {
            total += log_sum_exp(Eigen::VectorXd(lm.row(l).transpose() + logpi));
        }
    } else {
        if (design->rows() != counts.rows()) {
            throw contract_error("observed_loglik: design rows disagree with counts");
        }
        // log pi_i(x_l) for the multinomial logit with eta_k = 0.
        Eigen::MatrixXd logits(lm.rows(), k);
        logits.leftCols(k - 1) = (*design) * theta.mixture.eta.transpose();
        logits.col(k - 1).setZero();
        for (Eigen::Index l = 0; l < lm.rows(); ++l) {
            const double norm = log_sum_exp(Eigen::VectorXd(logits.row(l)));
            total += log_sum_exp(Eigen::VectorXd(lm.row(l).transpose() +
                                                 (logits.row(l).transpose().array() - norm).matrix()));
        }
    }
    return total;
}

IdentifiabilityReport check_identifiability(const Theta& theta, double tol) {
    const int q = theta.dims.q;
    const int k = theta.dims.k;
    IdentifiabilityReport report;

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(q, q);
    for (int i = 0; i < k; ++i) {
        const double w = theta.mixture.weights(i);
        mean += w * theta.mixture.means[i];
        second += w * (theta.mixture.covs[i] +
                       theta.mixture.means[i] * theta.mixture.means[i].transpose());
    }
    report.mean_zero = {"mixture mean zero", false, mean.cwiseAbs().maxCoeff()};
    report.unit_variance = {"mixture variance identity", false,
                            (second - Eigen::MatrixXd::Identity(q, q)).cwiseAbs().maxCoeff()};

    double tri = 0.0;
    for (int j = 0; j < theta.dims.p; ++j) {
        for (int c = j + 1; c < q; ++c) tri = std::max(tri, std::abs(theta.loadings.loadings(j, c)));
    }
    report.loading_triangle = {"loading triangle zeros", false, tri};
    report.first_intercept = {"first intercept zero", false,
                              std::abs(theta.loadings.intercepts(0))};

    for (ConditionCheck* c : {&report.mean_zero, &report.unit_variance, &report.loading_triangle,
                              &report.first_intercept}) {
        c->pass = c->magnitude <= tol;
    }
    return report;
}

std::string IdentifiabilityReport::to_string() const {
    std::ostringstream os;
    for (const ConditionCheck* c : {&mean_zero, &unit_variance, &loading_triangle,
                                    &first_intercept}) {
        os << (c->pass ? "PASS" : "FAIL") << "  " << c->name << "  (violation " << c->magnitude
           << ")\n";
    }
    return os.str();
}

}  // namespace pfm
