#include "pfm/selection.hpp"

#include <cmath>
#include <future>
#include <sstream>

#include "pfm/errors.hpp"

namespace pfm {

int ledermann_max_q(int p) {
    if (p < 1) throw contract_error("ledermann_max_q: p must be >= 1");
    // Largest q >= 0 with 2q <= 2p + 1 - sqrt(8p + 1), decided in integer
    // arithmetic: sqrt(8p+1) <= 2p + 1 - 2q  <=>  (2p + 1 - 2q)^2 >= 8p + 1.
    const long long bound = 8LL * p + 1;
    int q = 0;
    for (int cand = 1; cand <= p; ++cand) {
        const long long rest = 2LL * p + 1 - 2LL * cand;
        if (rest >= 0 && rest * rest >= bound) {
            q = cand;
        } else {
            break;
        }
    }
    return q;
}

int count_params(int p, int q, int k, int m) {
    if (k < 1 || m < 0) throw contract_error("count_params: need k >= 1 and m >= 0");
    if (q > ledermann_max_q(p)) {
        std::ostringstream os;
        os << "count_params: q=" << q << " exceeds the Ledermann bound for p=" << p;
        throw contract_error(os.str());
    }
    const int weight_params = m == 0 ? (k - 1) : (k - 1) * (m + 1);
    return p * (q + 1) - (q * (q - 1) / 2 + 1) + (q * (q + 1) / 2) * (k - 1) + q * (k - 1) +
           weight_params;
}

double aic(double loglik, int h) { return -2.0 * loglik + 2.0 * h; }

double bic(double loglik, int h, int n) {
    if (n < 1) throw contract_error("bic: n must be >= 1");
    return -2.0 * loglik + h * std::log(static_cast<double>(n));
}

SelectionTable grid_search(const CountMatrix& counts, const std::vector<int>& q_range,
                           const std::vector<int>& k_range, int seeds_per_cell,
                           const FitConfig& config, const std::optional<Eigen::MatrixXd>& design,
                           int threads) {
    if (q_range.empty() || k_range.empty()) {
        throw config_error("grid_search: empty q or k range");
    }
    if (seeds_per_cell < 1) throw config_error("grid_search: seeds_per_cell must be >= 1");
    const int qmax = ledermann_max_q(counts.cols());
    for (int q : q_range) {
        if (q < 1 || q > qmax) {
            std::ostringstream os;
            os << "grid_search: q=" << q << " outside [1, " << qmax << "] (Ledermann bound for p="
               << counts.cols() << ")";
            throw config_error(os.str());
        }
    }

    struct CellJob {
        int q;
        int k;
    };
    std::vector<CellJob> jobs;
    for (int q : q_range) {
        for (int k : k_range) jobs.push_back({q, k});
    }

    const int m = design ? static_cast<int>(design->cols()) - 1 : 0;
    const auto run_cell = [&](const CellJob& job) {
        SelectionCell cell;
        cell.q = job.q;
        cell.k = job.k;
        cell.seed_count = seeds_per_cell;
        int converged = 0;
        std::optional<FitResult> best_converged;
        std::optional<FitResult> best_any;
        for (int seed = 1; seed <= seeds_per_cell; ++seed) {
            FitConfig cfg = config;
            cfg.seed = static_cast<std::uint64_t>(seed);
            ModelDims dims{counts.rows(), counts.cols(), job.q, job.k, m};
            try {
                FitResult fitres = fit(counts, dims, cfg, design);
                if (fitres.converged) {
                    ++converged;
                    if (!best_converged || fitres.loglik > best_converged->loglik) {
                        best_converged = fitres;  // ties keep the lowest seed
                    }
                }
                if (!best_any || fitres.loglik > best_any->loglik) best_any = std::move(fitres);
            } catch (const error&) {
                // seed failed; the cell survives if any other seed works
            }
        }
        cell.converged_fraction = static_cast<double>(converged) / seeds_per_cell;
        std::optional<FitResult>& chosen = best_converged ? best_converged : best_any;
        if (chosen) {
            cell.usable = true;
            cell.best_loglik = chosen->loglik;
            cell.h = count_params(counts.cols(), job.q, job.k, m);
            cell.aic = chosen->aic;
            cell.bic = chosen->bic;
            cell.best_fit = std::move(*chosen);
        }
        return cell;
    };

    std::vector<SelectionCell> cells(jobs.size());
    if (threads <= 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) cells[j] = run_cell(jobs[j]);
    } else {
        std::vector<std::future<SelectionCell>> futures(jobs.size());
        std::size_t next = 0;
        while (next < jobs.size()) {
            const std::size_t batch =
                std::min<std::size_t>(threads, jobs.size() - next);
            for (std::size_t b = 0; b < batch; ++b) {
                futures[next + b] =
                    std::async(std::launch::async, run_cell, std::cref(jobs[next + b]));
            }
            for (std::size_t b = 0; b < batch; ++b) cells[next + b] = futures[next + b].get();
            next += batch;
        }
    }

    SelectionTable table;
    table.cells = std::move(cells);
    for (std::size_t j = 0; j < table.cells.size(); ++j) {
        const auto& cell = table.cells[j];
        if (!cell.usable || cell.converged_fraction == 0.0) continue;
        if (table.chosen_by_aic < 0 || cell.aic < table.cells[table.chosen_by_aic].aic) {
            table.chosen_by_aic = static_cast<int>(j);
        }
        if (table.chosen_by_bic < 0 || cell.bic < table.cells[table.chosen_by_bic].bic) {
            table.chosen_by_bic = static_cast<int>(j);
        }
    }
    if (table.chosen_by_aic < 0) {
        // no converged cell anywhere: fall back to the usable ones
        for (std::size_t j = 0; j < table.cells.size(); ++j) {
            const auto& cell = table.cells[j];
            if (!cell.usable) continue;
            if (table.chosen_by_aic < 0 || cell.aic < table.cells[table.chosen_by_aic].aic) {
                table.chosen_by_aic = static_cast<int>(j);
            }
            if (table.chosen_by_bic < 0 || cell.bic < table.cells[table.chosen_by_bic].bic) {
                table.chosen_by_bic = static_cast<int>(j);
            }
        }
    }
    if (table.chosen_by_aic < 0) {
        throw config_error("grid_search: every cell failed");
    }
    return table;
}

}  // namespace pfm
