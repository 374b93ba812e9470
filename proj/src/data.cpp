#include "sepdgp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sepdgp/rng.hpp"

namespace sepdgp::data {

namespace {

// RFC-4180 record reader: handles quoted fields, embedded commas/newlines
// and CRLF line endings. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool saw_any = false;
    int c;
    while ((c = in.get()) != EOF) {
        saw_any = true;
        const char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get();
            fields.push_back(std::move(field));
            return true;
        } else if (ch == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(ch);
        }
    }
    if (!saw_any) return false;
    fields.push_back(std::move(field));
    return true;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string cell = trim(raw);
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-numeric cell \"" << cell << "\" at data row " << row << ", column \""
            << column << "\"";
        throw ParseError(msg.str());
    }
    return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);

    std::vector<std::string> header;
    if (!read_record(in, header) || header.empty()) {
        throw ParseError("empty CSV or missing header row: " + path);
    }
    for (auto& h : header) h = trim(h);

    // Resolve the target column: integer index (negative from the end) or name.
    Eigen::Index target = -1;
    {
        int idx = 0;
        const auto [ptr, ec] =
            std::from_chars(target_column.data(), target_column.data() + target_column.size(), idx);
        if (ec == std::errc{} && ptr == target_column.data() + target_column.size()) {
            const Eigen::Index cols = static_cast<Eigen::Index>(header.size());
            target = idx < 0 ? cols + idx : idx;
            if (target < 0 || target >= cols) {
                throw ParseError("target column index out of range: " + target_column);
            }
        } else {
            const auto it = std::find(header.begin(), header.end(), target_column);
            if (it == header.end()) {
                throw ParseError("target column \"" + target_column + "\" not found in header");
            }
            target = static_cast<Eigen::Index>(it - header.begin());
        }
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::string> record;
    std::size_t row_number = 0;
    while (read_record(in, record)) {
        if (record.size() == 1 && trim(record[0]).empty()) continue;  // trailing blank line
        ++row_number;
        if (record.size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << row_number << " has " << record.size() << " cells, expected "
                << header.size();
            throw ParseError(msg.str());
        }
        std::vector<double> parsed(record.size());
        for (std::size_t c = 0; c < record.size(); ++c) {
            parsed[c] = parse_cell(record[c], row_number, header[c]);
        }
        rows.push_back(std::move(parsed));
    }
    if (rows.size() < 2) throw ParseError("dataset needs at least 2 rows: " + path);

    Dataset ds;
    ds.name = path;
    ds.target_name = header[target];
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index d = static_cast<Eigen::Index>(header.size()) - 1;
    ds.x.resize(n, d);
    ds.y.resize(n);
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(header.size()); ++c) {
        if (c != target) ds.column_names.push_back(header[c]);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index fc = 0;
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(header.size()); ++c) {
            if (c == target) {
                ds.y[i] = rows[i][c];
            } else {
                ds.x(i, fc++) = rows[i][c];
            }
        }
    }
    return ds;
}

Eigen::MatrixXd Standardizer::apply_x(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - input_mean.transpose()).array().rowwise() /
           input_std.transpose().array();
}

Eigen::VectorXd Standardizer::apply_y(const Eigen::VectorXd& y) const {
    return (y.array() - target_mean) / target_std;
}

Eigen::MatrixXd Standardizer::invert_x(const Eigen::MatrixXd& xs) const {
    return (xs.array().rowwise() * input_std.transpose().array()).rowwise() +
           input_mean.transpose().array();
}

Eigen::VectorXd Standardizer::invert_y(const Eigen::VectorXd& ys) const {
    return ys.array() * target_std + target_mean;
}

Standardizer Standardizer::identity(Eigen::Index d) {
    Standardizer s;
    s.input_mean = Eigen::VectorXd::Zero(d);
    s.input_std = Eigen::VectorXd::Ones(d);
    return s;
}

Standardizer fit_standardizer(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() == 0 || x.rows() != y.size()) {
        throw DimensionError("fit_standardizer: empty data or row count mismatch");
    }
    Standardizer s;
    const double n = static_cast<double>(x.rows());
    s.input_mean = x.colwise().mean();
    s.input_std.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - s.input_mean[c]).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd > 0.0) {
            s.input_std[c] = sd;
        } else {
            s.input_std[c] = 1.0;
            s.constant_columns.push_back(static_cast<int>(c));
        }
    }
    s.target_mean = y.mean();
    const double tvar = (y.array() - s.target_mean).square().sum() / n;
    const double tsd = std::sqrt(tvar);
    if (tsd > 0.0) {
        s.target_std = tsd;
    } else {
        s.target_std = 1.0;
        s.target_constant = true;
    }
    return s;
}

std::vector<Split> make_splits(Eigen::Index n, int n_splits, double train_fraction,
                               std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DimensionError("make_splits: train_fraction must be in (0, 1)");
    }
    const Eigen::Index n_train = static_cast<Eigen::Index>(
        std::floor(static_cast<double>(n) * train_fraction));
    if (n_train < 1 || n_train >= n) {
        throw DimensionError("make_splits: degenerate split sizes");
    }
    std::vector<Split> splits;
    splits.reserve(n_splits);
    for (int i = 0; i < n_splits; ++i) {
        rng::Rng r(seed + static_cast<std::uint64_t>(i));
        const auto perm = r.permutation(static_cast<std::size_t>(n));
        Split sp;
        sp.train_idx.assign(perm.begin(), perm.begin() + n_train);
        sp.test_idx.assign(perm.begin() + n_train, perm.end());
        splits.push_back(std::move(sp));
    }
    return splits;
}

Dataset subset(const Dataset& full, const std::vector<Eigen::Index>& rows) {
    Dataset out;
    out.name = full.name;
    out.column_names = full.column_names;
    out.target_name = full.target_name;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), full.d());
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.x.row(static_cast<Eigen::Index>(i)) = full.x.row(rows[i]);
        out.y[static_cast<Eigen::Index>(i)] = full.y[rows[i]];
    }
    return out;
}

std::string default_data_dir() {
    if (const char* env = std::getenv("SEPDGP_DATA_DIR")) return env;
    return "data";
}

std::map<std::string, RegistryEntry> load_registry(const std::string& data_dir) {
    const std::string path = data_dir + "/datasets.json";
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset registry: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid registry JSON at " + path + ": " + e.what());
    }
    std::map<std::string, RegistryEntry> registry;
    for (const auto& [name, entry] : doc.items()) {
        registry[name] = RegistryEntry{entry.at("path").get<std::string>(),
                                       entry.at("target").get<std::string>()};
    }
    return registry;
}

Dataset load_registered(const std::string& name, const std::string& data_dir) {
    const auto registry = load_registry(data_dir);
    const auto it = registry.find(name);
    if (it == registry.end()) {
        throw ParseError("dataset \"" + name + "\" not present in registry at " + data_dir);
    }
    Dataset ds = load_csv(data_dir + "/" + it->second.path, it->second.target);
    ds.name = name;
    return ds;
}

}  // namespace sepdgp::data
