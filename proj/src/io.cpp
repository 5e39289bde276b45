#include "pfm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pfm/errors.hpp"

namespace pfm {

namespace {

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw data_error("cannot write file: " + path.string());
    return out;
}

double parse_double(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw data_error("malformed number '" + text + "' " + where);
    }
}

}  // namespace

std::vector<std::string> canonical_count_columns() {
    return {"nORT", "nREG", "nMRC", "nLES", "nMFS", "nCOE", "nSIN"};
}

CountMatrix load_counts_csv(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty counts file: " + path.string());
    CountMatrix counts;
    for (const auto& name : split_csv_line(line)) counts.column_names.push_back(trim(name));
    const int p = static_cast<int>(counts.column_names.size());
    if (p == 0) throw data_error("counts file has no columns: " + path.string());

    std::vector<std::vector<int>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != p) {
            std::ostringstream os;
            os << path.string() << ": row " << lineno << " has " << fields.size()
               << " cells, expected " << p;
            throw data_error(os.str());
        }
        std::vector<int> row(p);
        for (int j = 0; j < p; ++j) {
            const std::string cell = trim(fields[j]);
            int value = 0;
            const auto [ptr, ec] =
                std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                std::ostringstream os;
                os << path.string() << ": row " << lineno << ", column '"
                   << counts.column_names[j] << "': cell '" << cell
                   << "' is not a non-negative integer";
                throw data_error(os.str());
            }
            if (value < 0) {
                std::ostringstream os;
                os << path.string() << ": row " << lineno << ", column '"
                   << counts.column_names[j] << "': negative count " << value;
                throw data_error(os.str());
            }
            row[j] = value;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw data_error("counts file has no data rows: " + path.string());
    counts.values.resize(static_cast<int>(rows.size()), p);
    for (std::size_t l = 0; l < rows.size(); ++l) {
        for (int j = 0; j < p; ++j) counts.values(static_cast<int>(l), j) = rows[l][j];
    }
    counts.validate();
    return counts;
}

DesignMatrix load_covariates_csv(const std::filesystem::path& path,
                                 const CovariateSchema& schema) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty covariate file: " + path.string());
    const auto header = split_csv_line(line);
    if (header.size() != schema.covariates.size()) {
        std::ostringstream os;
        os << path.string() << ": " << header.size() << " covariate columns, schema declares "
           << schema.covariates.size();
        throw data_error(os.str());
    }

    CovariateRecords records;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != schema.covariates.size()) {
            std::ostringstream os;
            os << path.string() << ": row " << lineno << " has " << fields.size()
               << " cells, expected " << schema.covariates.size();
            throw data_error(os.str());
        }
        for (auto& f : fields) {
            f = trim(f);
            if (f == "Don't know-don't answer") f = "NA";
        }
        records.push_back(std::move(fields));
    }
    if (records.empty()) throw data_error("covariate file has no data rows: " + path.string());
    return encode_covariates(records, schema);
}

CovariateSchema load_covariate_schema(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    CovariateSchema schema;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string keyword, name, kind, rest;
        is >> keyword >> name >> kind;
        std::getline(is, rest);
        rest = trim(rest);
        if (keyword != "covariate" || name.empty() || rest.empty()) {
            std::ostringstream os;
            os << path.string() << ":" << lineno << ": expected 'covariate <name> <kind> ...'";
            throw data_error(os.str());
        }
        CovariateSpec spec;
        spec.name = name;
        std::istringstream items(rest);
        std::string item;
        if (kind == "categorical") {
            spec.kind = CovariateSpec::Kind::kCategorical;
            while (std::getline(items, item, ',')) spec.levels.push_back(trim(item));
        } else if (kind == "midpoint") {
            spec.kind = CovariateSpec::Kind::kMidpointNumeric;
            while (std::getline(items, item, ',')) {
                const auto eq = item.find_last_of('=');
                if (eq == std::string::npos) {
                    std::ostringstream os;
                    os << path.string() << ":" << lineno << ": midpoint item '" << item
                       << "' must be <level>=<value>";
                    throw data_error(os.str());
                }
                spec.levels.push_back(trim(item.substr(0, eq)));
                spec.midpoints.push_back(
                    parse_double(trim(item.substr(eq + 1)),
                                 "in schema " + path.string() + " line " + std::to_string(lineno)));
            }
        } else {
            std::ostringstream os;
            os << path.string() << ":" << lineno << ": unknown covariate kind '" << kind << "'";
            throw data_error(os.str());
        }
        schema.covariates.push_back(std::move(spec));
    }
    schema.validate();
    return schema;
}

void write_covariate_schema(const CovariateSchema& schema, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    out << "# covariate schema: first categorical level is the reference\n";
    for (const auto& c : schema.covariates) {
        out << "covariate " << c.name << ' '
            << (c.kind == CovariateSpec::Kind::kCategorical ? "categorical " : "midpoint ");
        for (std::size_t i = 0; i < c.levels.size(); ++i) {
            if (i) out << ',';
            out << c.levels[i];
            if (c.kind == CovariateSpec::Kind::kMidpointNumeric) {
                out << '=' << format_full(c.midpoints[i]);
            }
        }
        out << '\n';
    }
}

void write_theta(const Theta& theta, const std::vector<std::string>& column_names,
                 const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    const auto& d = theta.dims;
    out << "# poisson factor mixture parameters\n";
    out << "dims " << d.n << ' ' << d.p << ' ' << d.q << ' ' << d.k << ' ' << d.m << '\n';
    if (!column_names.empty()) {
        out << "columns";
        for (const auto& name : column_names) out << ' ' << name;
        out << '\n';
    }
    out << "lambda0";
    for (int j = 0; j < d.p; ++j) out << ' ' << format_full(theta.loadings.intercepts(j));
    out << '\n';
    for (int j = 0; j < d.p; ++j) {
        out << "lambda " << j;
        for (int c = 0; c < d.q; ++c) out << ' ' << format_full(theta.loadings.loadings(j, c));
        out << '\n';
    }
    out << "pi";
    for (int i = 0; i < d.k; ++i) out << ' ' << format_full(theta.mixture.weights(i));
    out << '\n';
    for (int i = 0; i < d.k; ++i) {
        out << "mu " << i;
        for (int c = 0; c < d.q; ++c) out << ' ' << format_full(theta.mixture.means[i](c));
        out << '\n';
        for (int a = 0; a < d.q; ++a) {
            out << "sigma " << i << ' ' << a;
            for (int b = 0; b < d.q; ++b) {
                out << ' ' << format_full(theta.mixture.covs[i](a, b));
            }
            out << '\n';
        }
    }
    if (theta.mixture.eta.size() > 0) {
        for (int i = 0; i < d.k - 1; ++i) {
            out << "eta " << i;
            for (int c = 0; c <= d.m; ++c) out << ' ' << format_full(theta.mixture.eta(i, c));
            out << '\n';
        }
    }
}

Theta read_theta(const std::filesystem::path& path, std::vector<std::string>* column_names) {
    std::ifstream in = open_input(path);
    Theta theta;
    bool have_dims = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string key;
        is >> key;
        const std::string where = "in " + path.string() + " line " + std::to_string(lineno);
        if (key == "dims") {
            if (!(is >> theta.dims.n >> theta.dims.p >> theta.dims.q >> theta.dims.k >>
                  theta.dims.m)) {
                throw data_error("malformed dims " + where);
            }
            theta.loadings = Loadings::zeros(theta.dims.p, theta.dims.q);
            theta.mixture.weights = Eigen::VectorXd::Zero(theta.dims.k);
            theta.mixture.means.assign(theta.dims.k, Eigen::VectorXd::Zero(theta.dims.q));
            theta.mixture.covs.assign(theta.dims.k,
                                      Eigen::MatrixXd::Zero(theta.dims.q, theta.dims.q));
            have_dims = true;
            continue;
        }
        if (!have_dims) throw data_error("parameter file must start with dims: " + path.string());
        std::string token;
        if (key == "columns") {
            std::vector<std::string> names;
            while (is >> token) names.push_back(token);
            if (column_names) *column_names = std::move(names);
        } else if (key == "lambda0") {
            for (int j = 0; j < theta.dims.p; ++j) {
                if (!(is >> token)) throw data_error("short lambda0 " + where);
                theta.loadings.intercepts(j) = parse_double(token, where);
            }
        } else if (key == "lambda") {
            int j = 0;
            if (!(is >> j) || j < 0 || j >= theta.dims.p) {
                throw data_error("bad lambda row " + where);
            }
            for (int c = 0; c < theta.dims.q; ++c) {
                if (!(is >> token)) throw data_error("short lambda row " + where);
                theta.loadings.loadings(j, c) = parse_double(token, where);
            }
        } else if (key == "pi") {
            for (int i = 0; i < theta.dims.k; ++i) {
                if (!(is >> token)) throw data_error("short pi " + where);
                theta.mixture.weights(i) = parse_double(token, where);
            }
        } else if (key == "mu") {
            int i = 0;
            if (!(is >> i) || i < 0 || i >= theta.dims.k) throw data_error("bad mu row " + where);
            for (int c = 0; c < theta.dims.q; ++c) {
                if (!(is >> token)) throw data_error("short mu row " + where);
                theta.mixture.means[i](c) = parse_double(token, where);
            }
        } else if (key == "sigma") {
            int i = 0, a = 0;
            if (!(is >> i >> a) || i < 0 || i >= theta.dims.k || a < 0 || a >= theta.dims.q) {
                throw data_error("bad sigma row " + where);
            }
            for (int b = 0; b < theta.dims.q; ++b) {
                if (!(is >> token)) throw data_error("short sigma row " + where);
                theta.mixture.covs[i](a, b) = parse_double(token, where);
            }
        } else if (key == "eta") {
            if (theta.mixture.eta.size() == 0) {
                theta.mixture.eta = Eigen::MatrixXd::Zero(theta.dims.k - 1, theta.dims.m + 1);
            }
            int i = 0;
            if (!(is >> i) || i < 0 || i >= theta.dims.k - 1) {
                throw data_error("bad eta row " + where);
            }
            for (int c = 0; c <= theta.dims.m; ++c) {
                if (!(is >> token)) throw data_error("short eta row " + where);
                theta.mixture.eta(i, c) = parse_double(token, where);
            }
        } else {
            throw data_error("unknown key '" + key + "' " + where);
        }
    }
    if (!have_dims) throw data_error("parameter file has no dims line: " + path.string());
    theta.validate();
    return theta;
}

void write_counts_csv(const CountMatrix& counts, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    for (int j = 0; j < counts.cols(); ++j) {
        if (j) out << ',';
        out << (j < static_cast<int>(counts.column_names.size()) ? counts.column_names[j]
                                                                 : "v" + std::to_string(j + 1));
    }
    out << '\n';
    for (int l = 0; l < counts.rows(); ++l) {
        for (int j = 0; j < counts.cols(); ++j) {
            if (j) out << ',';
            out << counts.values(l, j);
        }
        out << '\n';
    }
}

void write_matrix_csv(const Eigen::MatrixXd& values, const std::vector<std::string>& header,
                      const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    if (!header.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (j) out << ',';
            out << header[j];
        }
        out << '\n';
    }
    for (Eigen::Index l = 0; l < values.rows(); ++l) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (j) out << ',';
            out << format_full(values(l, j));
        }
        out << '\n';
    }
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path,
                                std::vector<std::string>* header) {
    std::ifstream in = open_input(path);
    std::string line;
    std::vector<std::vector<double>> rows;
    int lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (first) {
            first = false;
            // a header line is any line with a non-numeric first cell
            bool numeric = true;
            try {
                parse_double(trim(fields[0]), "");
            } catch (const data_error&) {
                numeric = false;
            }
            if (!numeric) {
                if (header) {
                    header->clear();
                    for (const auto& f : fields) header->push_back(trim(f));
                }
                continue;
            }
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            row.push_back(parse_double(trim(f), "in " + path.string() + " line " +
                                                    std::to_string(lineno)));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw data_error(path.string() + ": ragged rows");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw data_error(path.string() + ": no numeric rows");
    Eigen::MatrixXd out(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (std::size_t l = 0; l < rows.size(); ++l) {
        for (std::size_t j = 0; j < rows.front().size(); ++j) {
            out(static_cast<int>(l), static_cast<int>(j)) = rows[l][j];
        }
    }
    return out;
}

void write_fit_result(const FitResult& result, const std::vector<std::string>& column_names,
                      const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    write_theta(result.theta, column_names, directory / "params.txt");

    {
        std::ofstream out = open_output(directory / "trace.csv");
        out << "iteration,loglik\n";
        for (std::size_t i = 0; i < result.loglik_trace.size(); ++i) {
            out << i << ',' << format_full(result.loglik_trace[i]) << '\n';
        }
    }
    {
        std::ofstream out = open_output(directory / "criteria.csv");
        out << "loglik,h,aic,bic,converged,iterations\n";
        const int h = count_params(result.theta.dims.p, result.theta.dims.q,
                                   result.theta.dims.k, result.theta.dims.m);
        out << format_full(result.loglik) << ',' << h << ',' << format_full(result.aic) << ','
            << format_full(result.bic) << ',' << (result.converged ? 1 : 0) << ','
            << result.iterations << '\n';
    }
    {
        std::ofstream out = open_output(directory / "scores.csv");
        const int q = result.theta.dims.q;
        const int k = result.theta.dims.k;
        for (int c = 0; c < q; ++c) out << "score" << c + 1 << ',';
        out << "label";
        for (int i = 0; i < k; ++i) out << ",resp" << i + 1;
        out << '\n';
        const Eigen::MatrixXd resp = result.estep.responsibilities();
        for (Eigen::Index l = 0; l < result.factor_scores.rows(); ++l) {
            for (int c = 0; c < q; ++c) out << format_full(result.factor_scores(l, c)) << ',';
            out << result.labels[l] + 1;  // 1-based labels in files
            for (int i = 0; i < k; ++i) out << ',' << format_full(resp(l, i));
            out << '\n';
        }
    }
    {
        std::ofstream out = open_output(directory / "loadings.csv");
        out << "variable";
        for (int c = 0; c < result.theta.dims.q; ++c) out << ",factor" << c + 1;
        out << '\n';
        for (int j = 0; j < result.theta.dims.p; ++j) {
            out << (j < static_cast<int>(column_names.size()) ? column_names[j]
                                                              : "v" + std::to_string(j + 1));
            for (int c = 0; c < result.theta.dims.q; ++c) {
                out << ',' << format_full(result.theta.loadings.loadings(j, c));
            }
            out << '\n';
        }
    }
    {
        std::ofstream out = open_output(directory / "identifiability.txt");
        out << check_identifiability(result.theta, 1e-8).to_string();
    }
}

void write_selection_csv(const SelectionTable& table, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    out << "q,k,seed_count,best_loglik,h,aic,bic,converged_fraction,chosen_by_aic,"
           "chosen_by_bic\n";
    for (std::size_t j = 0; j < table.cells.size(); ++j) {
        const auto& cell = table.cells[j];
        out << cell.q << ',' << cell.k << ',' << cell.seed_count << ','
            << (cell.usable ? format_full(cell.best_loglik) : "NA") << ','
            << (cell.usable ? std::to_string(cell.h) : "NA") << ','
            << (cell.usable ? format_full(cell.aic) : "NA") << ','
            << (cell.usable ? format_full(cell.bic) : "NA") << ','
            << format_full(cell.converged_fraction) << ','
            << (static_cast<int>(j) == table.chosen_by_aic ? 1 : 0) << ','
            << (static_cast<int>(j) == table.chosen_by_bic ? 1 : 0) << '\n';
    }
}

void write_rotation_result(const RotationResult& result,
                           const std::vector<std::string>& row_names, double display_threshold,
                           const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    {
        std::vector<std::string> header = {"variable"};
        for (Eigen::Index c = 0; c < result.rotated_loadings.cols(); ++c) {
            header.push_back("factor" + std::to_string(c + 1));
        }
        std::ofstream out = open_output(directory / "rotated_loadings.csv");
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (j) out << ',';
            out << header[j];
        }
        out << '\n';
        for (Eigen::Index j = 0; j < result.rotated_loadings.rows(); ++j) {
            out << (j < static_cast<Eigen::Index>(row_names.size())
                        ? row_names[j]
                        : "v" + std::to_string(j + 1));
            for (Eigen::Index c = 0; c < result.rotated_loadings.cols(); ++c) {
                out << ',' << format_full(result.rotated_loadings(j, c));
            }
            out << '\n';
        }
    }
    write_matrix_csv(result.factor_correlation, {}, directory / "factor_correlation.csv");
    write_matrix_csv(result.rotation_matrix, {}, directory / "rotation_matrix.csv");
    {
        std::ofstream out = open_output(directory / "loadings_display.txt");
        out << loading_display(result, row_names, display_threshold);
    }
}

void write_manifest(const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
}

}  // namespace pfm
