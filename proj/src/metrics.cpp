#include "pfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pfm/errors.hpp"

namespace pfm {

namespace {

std::vector<int> relabel(std::span<const int> labels, int& count) {
    std::map<int, int> ids;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto [it, inserted] = ids.emplace(labels[i], static_cast<int>(ids.size()));
        out[i] = it->second;
    }
    count = static_cast<int>(ids.size());
    return out;
}

std::vector<std::vector<long long>> contingency(std::span<const int> a, std::span<const int> b,
                                                int& ka, int& kb) {
    const std::vector<int> ra = relabel(a, ka);
    const std::vector<int> rb = relabel(b, kb);
    std::vector<std::vector<long long>> table(ka, std::vector<long long>(kb, 0));
    for (std::size_t i = 0; i < a.size(); ++i) ++table[ra[i]][rb[i]];
    return table;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

/// Exact rectangular assignment (Jonker-Volgenant style shortest
/// augmenting paths) minimizing total cost on a square matrix.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0);  // column -> row (1-based)
    std::vector<int> way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = match[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw contract_error("adjusted_rand_index: length mismatch");
    if (a.size() < 2) throw contract_error("adjusted_rand_index: need at least two items");
    int ka = 0, kb = 0;
    const auto table = contingency(a, b, ka, kb);
    double sum_cells = 0.0;
    std::vector<long long> rows(ka, 0), cols(kb, 0);
    for (int i = 0; i < ka; ++i) {
        for (int j = 0; j < kb; ++j) {
            sum_cells += choose2(static_cast<double>(table[i][j]));
            rows[i] += table[i][j];
            cols[j] += table[i][j];
        }
    }
    double sum_rows = 0.0, sum_cols = 0.0;
    for (long long r : rows) sum_rows += choose2(static_cast<double>(r));
    for (long long c : cols) sum_cols += choose2(static_cast<double>(c));
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = sum_rows * sum_cols / total;
    const double maximum = 0.5 * (sum_rows + sum_cols);
    if (maximum == expected) {
        return sum_cells == expected ? 1.0 : 0.0;
    }
    return (sum_cells - expected) / (maximum - expected);
}

double misclassification_rate(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw contract_error("misclassification_rate: length mismatch");
    if (a.empty()) throw contract_error("misclassification_rate: empty labels");
    int ka = 0, kb = 0;
    const auto table = contingency(a, b, ka, kb);
    if (ka > 12 || kb > 12) {
        throw contract_error("misclassification_rate: more than 12 labels");
    }
    const int k = std::max(ka, kb);
    std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const long long agree = (i < ka && j < kb) ? table[i][j] : 0;
            cost[i][j] = -static_cast<double>(agree);  // maximize agreement
        }
    }
    const std::vector<int> match = solve_assignment(cost);
    long long agree = 0;
    for (int i = 0; i < ka; ++i) {
        if (match[i] < kb) agree += table[i][match[i]];
    }
    return 1.0 - static_cast<double>(agree) / static_cast<double>(a.size());
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    return adjusted_rand_index(std::span<const int>(a), std::span<const int>(b));
}

double misclassification_rate(const std::vector<int>& a, const std::vector<int>& b) {
    return misclassification_rate(std::span<const int>(a), std::span<const int>(b));
}

}  // namespace pfm
