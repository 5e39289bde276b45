#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pfm/covariates.hpp"
#include "pfm/estimation.hpp"
#include "pfm/model.hpp"
#include "pfm/rotation.hpp"
#include "pfm/selection.hpp"
#include "pfm/simulation.hpp"

namespace pfm {

/// The canonical seven annotation features.
std::vector<std::string> canonical_count_columns();

/// Header + integer cells, comma separated. Rejects negatives,
/// non-integers and missing cells with row/column diagnostics.
CountMatrix load_counts_csv(const std::filesystem::path& path);

/// Raw covariate CSV (header + string cells) encoded against `schema`.
/// The cell "Don't know-don't answer" is read as the level "NA".
DesignMatrix load_covariates_csv(const std::filesystem::path& path,
                                 const CovariateSchema& schema);

/// Keyed text covariate schema:
///   covariate <name> categorical <level>[,<level>...]
///   covariate <name> midpoint <level>=<value>[,<level>=<value>...]
/// The first level of a categorical covariate is the reference.
CovariateSchema load_covariate_schema(const std::filesystem::path& path);
void write_covariate_schema(const CovariateSchema& schema, const std::filesystem::path& path);

/// Full-precision keyed text parameter files; write-then-read returns the
/// same Theta bit for bit.
void write_theta(const Theta& theta, const std::vector<std::string>& column_names,
                 const std::filesystem::path& path);
Theta read_theta(const std::filesystem::path& path, std::vector<std::string>* column_names = nullptr);

void write_counts_csv(const CountMatrix& counts, const std::filesystem::path& path);
void write_matrix_csv(const Eigen::MatrixXd& values, const std::vector<std::string>& header,
                      const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path,
                                std::vector<std::string>* header = nullptr);

/// FitResult artifact bundle: parameters, log-likelihood trace, labels and
/// scores, information criteria, identifiability report.
void write_fit_result(const FitResult& result, const std::vector<std::string>& column_names,
                      const std::filesystem::path& directory);

void write_selection_csv(const SelectionTable& table, const std::filesystem::path& path);

void write_rotation_result(const RotationResult& result,
                           const std::vector<std::string>& row_names, double display_threshold,
                           const std::filesystem::path& directory);

/// Key-value run manifest (command, config, seed, version, timing).
/// Timestamps appear only here so every other artifact is byte-stable.
void write_manifest(const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::filesystem::path& path);

}  // namespace pfm
