#pragma once

#include <Eigen/Core>
#include <vector>

#include "sepdgp/errors.hpp"

namespace sepdgp::metrics {

struct EvalReport {
    double rmse = 0.0;
    double mll = 0.0;
    Eigen::VectorXd per_point_log_densities;
    long n_test = 0;
};

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

/// Mean predictive log density log N(y_n; m_n, v_n); higher is better.
double mll(const Eigen::VectorXd& means, const Eigen::VectorXd& variances,
           const Eigen::VectorXd& targets);

EvalReport evaluate(const Eigen::VectorXd& means, const Eigen::VectorXd& variances,
                    const Eigen::VectorXd& targets);

}  // namespace sepdgp::metrics
