#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sepdgp/errors.hpp"

namespace sepdgp::data {

struct Dataset {
    std::string name;
    Eigen::MatrixXd x;  // N x D
    Eigen::VectorXd y;  // N
    std::vector<std::string> column_names;  // feature columns, file order
    std::string target_name;

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index d() const { return x.cols(); }
};

/// Load an RFC-4180 CSV with a header row and all-numeric cells. The target
/// column may be given by name or by integer index (negative counts from the
/// end, so "-1" is the last column). Non-finite cells are parse errors.
Dataset load_csv(const std::string& path, const std::string& target_column);

/// Per-column affine transform fitted on training data only. Population
/// standard deviation; constant columns fall back to std 1 and are flagged.
struct Standardizer {
    Eigen::VectorXd input_mean;
    Eigen::VectorXd input_std;
    double target_mean = 0.0;
    double target_std = 1.0;
    std::vector<int> constant_columns;
    bool target_constant = false;

    Eigen::MatrixXd apply_x(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd apply_y(const Eigen::VectorXd& y) const;
    Eigen::MatrixXd invert_x(const Eigen::MatrixXd& xs) const;
    Eigen::VectorXd invert_y(const Eigen::VectorXd& ys) const;

    static Standardizer identity(Eigen::Index d);
};

Standardizer fit_standardizer(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct Split {
    std::vector<Eigen::Index> train_idx;
    std::vector<Eigen::Index> test_idx;
};

/// Seeded 90/10-style splits; split i permutes 0..n-1 with seed + i and takes
/// the first floor(n * train_fraction) indices for training.
std::vector<Split> make_splits(Eigen::Index n, int n_splits, double train_fraction,
                               std::uint64_t seed);

Dataset subset(const Dataset& full, const std::vector<Eigen::Index>& rows);

/// Registry mapping dataset names to CSV paths, read from
/// <data_dir>/datasets.json. data_dir defaults to $SEPDGP_DATA_DIR or "data".
struct RegistryEntry {
    std::string path;
    std::string target;
};

std::map<std::string, RegistryEntry> load_registry(const std::string& data_dir);
Dataset load_registered(const std::string& name, const std::string& data_dir);
std::string default_data_dir();

}  // namespace sepdgp::data
