#include "sepdgp/numerics.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

namespace sepdgp::numerics {

bool is_symmetric(const Eigen::MatrixXd& a, double relative_tol) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= relative_tol * scale;
}

bool try_chol(const Eigen::MatrixXd& a, Eigen::MatrixXd& l_out) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) return false;
    l_out = llt.matrixL();
    return true;
}

CholFactor chol_psd(const PsdMatrix& a, const JitterPolicy& policy) {
    if (a.rows() != a.cols()) {
        throw DimensionError("chol_psd: matrix is not square");
    }
    if (!is_symmetric(a)) {
        throw DimensionError("chol_psd: matrix is not symmetric to 1e-12 relative");
    }
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    const double mean_diag = sym.diagonal().mean();
    const double base = policy.initial_scale * std::max(mean_diag, 0.0);

    double jitter = 0.0;
    for (int attempt = 0; attempt < policy.max_attempts; ++attempt) {
        Eigen::MatrixXd candidate = sym;
        if (attempt > 0) {
            jitter = base * std::pow(policy.growth, attempt - 1);
            if (jitter <= 0.0) jitter = policy.initial_scale * std::pow(policy.growth, attempt - 1);
            candidate.diagonal().array() += jitter;
        }
        Eigen::MatrixXd l;
        if (try_chol(candidate, l)) {
            // A factorization that technically succeeds can still be too ill
            // conditioned to invert (condition ~ squared pivot ratio); keep
            // escalating until the factor is usable, not merely finite.
            const double pivot_max = l.diagonal().maxCoeff();
            const double pivot_min = l.diagonal().minCoeff();
            const bool usable =
                pivot_min > 0.0 && pivot_max / pivot_min < 1e5;
            if (usable || attempt + 1 == policy.max_attempts) {
                return CholFactor{std::move(l), attempt == 0 ? 0.0 : jitter};
            }
        }
    }
    std::ostringstream msg;
    msg << "chol_psd: factorization failed after " << policy.max_attempts
        << " attempts (last jitter " << jitter << ", dim " << a.rows() << ")";
    throw FactorizationError(msg.str());
}

Eigen::MatrixXd solve_psd(const CholFactor& factor, const Eigen::MatrixXd& b) {
    if (factor.L.rows() != b.rows()) {
        throw DimensionError("solve_psd: shape mismatch");
    }
    Eigen::MatrixXd x = factor.L.triangularView<Eigen::Lower>().solve(b);
    factor.L.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

Eigen::VectorXd solve_psd(const CholFactor& factor, const Eigen::VectorXd& b) {
    if (factor.L.rows() != b.rows()) {
        throw DimensionError("solve_psd: shape mismatch");
    }
    Eigen::VectorXd x = factor.L.triangularView<Eigen::Lower>().solve(b);
    factor.L.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

Eigen::MatrixXd inverse_psd(const CholFactor& factor) {
    const Eigen::MatrixXd identity =
        Eigen::MatrixXd::Identity(factor.L.rows(), factor.L.rows());
    return solve_psd(factor, identity);
}

double logdet_psd(const CholFactor& factor) {
    return 2.0 * factor.L.diagonal().array().log().sum();
}

}  // namespace sepdgp::numerics
