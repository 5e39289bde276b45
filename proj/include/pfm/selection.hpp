#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pfm/estimation.hpp"

namespace pfm {

/// One evaluated (q, k) cell of the selection grid.
struct SelectionCell {
    int q = 0;
    int k = 0;
    int seed_count = 0;
    double best_loglik = 0.0;
    int h = 0;
    double aic = 0.0;
    double bic = 0.0;
    double converged_fraction = 0.0;
    bool usable = false;  // at least one fit survived
    std::optional<FitResult> best_fit;
};

struct SelectionTable {
    std::vector<SelectionCell> cells;
    int chosen_by_aic = -1;  // index into cells, -1 if none usable
    int chosen_by_bic = -1;

    const SelectionCell* aic_choice() const {
        return chosen_by_aic >= 0 ? &cells[chosen_by_aic] : nullptr;
    }
    const SelectionCell* bic_choice() const {
        return chosen_by_bic >= 0 ? &cells[chosen_by_bic] : nullptr;
    }
};

/// Largest admissible number of factors: floor((2p + 1 - sqrt(8p + 1)) / 2),
/// evaluated in integer arithmetic so exact boundary cases are kept.
int ledermann_max_q(int p);

/// Free parameter count h. For m = 0 this is
///   p(q+1) - (q(q-1)/2 + 1) + (q(q+1)/2)(k-1) + q(k-1) + (k-1);
/// with covariates the final (k-1) becomes (k-1)(m+1).
int count_params(int p, int q, int k, int m = 0);

double aic(double loglik, int h);
double bic(double loglik, int h, int n);

/// Fits every (q, k) cell with seeds 1..seeds_per_cell, keeps the
/// best-log-likelihood converged solution per cell (non-converged fits are
/// used only when a cell has none), and marks the AIC/BIC argmin cells.
/// Throws config_error if every cell failed.
SelectionTable grid_search(const CountMatrix& counts, const std::vector<int>& q_range,
                           const std::vector<int>& k_range, int seeds_per_cell,
                           const FitConfig& config,
                           const std::optional<Eigen::MatrixXd>& design = std::nullopt,
                           int threads = 1);

}  // namespace pfm
