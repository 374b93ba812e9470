#include "sepdgp/metrics.hpp"

#include <cmath>

namespace sepdgp::metrics {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size() || predictions.size() == 0) {
        throw DimensionError("rmse: length mismatch or empty input");
    }
    return std::sqrt((predictions - targets).squaredNorm() /
                     static_cast<double>(predictions.size()));
}

double mll(const Eigen::VectorXd& means, const Eigen::VectorXd& variances,
           const Eigen::VectorXd& targets) {
    return evaluate(means, variances, targets).mll;
}

EvalReport evaluate(const Eigen::VectorXd& means, const Eigen::VectorXd& variances,
                    const Eigen::VectorXd& targets) {
    if (means.size() != targets.size() || variances.size() != targets.size() ||
        targets.size() == 0) {
        throw DimensionError("evaluate: length mismatch or empty input");
    }
    if ((variances.array() <= 0.0).any()) {
        throw DimensionError("evaluate: predictive variances must be positive");
    }
    EvalReport report;
    report.n_test = targets.size();
    report.per_point_log_densities.resize(targets.size());
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
        const double r = targets[i] - means[i];
        report.per_point_log_densities[i] =
            -0.5 * (kLog2Pi + std::log(variances[i])) - 0.5 * r * r / variances[i];
    }
    report.mll = report.per_point_log_densities.mean();
    report.rmse = rmse(means, targets);
    return report;
}

}  // namespace sepdgp::metrics
