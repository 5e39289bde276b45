#pragma once

#include <span>
#include <vector>

namespace pfm {

/// Hubert-Arabie adjusted Rand index between two partitions (arbitrary
/// label values). 1 for identical partitions up to relabeling; the
/// degenerate zero-denominator case returns 1 when the contingency counts
/// agree exactly and 0 otherwise.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Minimum misclassified fraction over all bijections between the two
/// label sets (exact assignment on the confusion matrix; smaller side
/// padded with empty labels). Throws contract_error above 12 labels.
double misclassification_rate(std::span<const int> a, std::span<const int> b);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);
double misclassification_rate(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace pfm
