#pragma once

#include <Eigen/Core>

#include "sepdgp/errors.hpp"

namespace sepdgp::numerics {

/// Dense symmetric PSD matrix; symmetry is checked at factorization time.
using PsdMatrix = Eigen::MatrixXd;

/// Escalation schedule for diagonal jitter. The first factorization attempt
/// uses no jitter at all; attempt k (k >= 2) uses
/// initial_scale * mean(diag(A)) * growth^(k-2).
struct JitterPolicy {
    double initial_scale = 1e-6;
    double growth = 10.0;
    int max_attempts = 5;
};

/// Lower-triangular Cholesky factor of A + jitter * I, with the jitter that
/// was needed. jitter == 0 whenever A factorizes as given.
struct CholFactor {
    Eigen::MatrixXd L;
    double jitter = 0.0;
};

/// Factorize a symmetric PSD matrix, escalating jitter per the policy.
/// Throws FactorizationError if max_attempts levels all fail, and
/// DimensionError if A is not square or not symmetric to 1e-12 relative.
CholFactor chol_psd(const PsdMatrix& a, const JitterPolicy& policy = {});

/// Solve (A + jitter*I) X = B using a factor from chol_psd.
Eigen::MatrixXd solve_psd(const CholFactor& factor, const Eigen::MatrixXd& b);
Eigen::VectorXd solve_psd(const CholFactor& factor, const Eigen::VectorXd& b);

/// Explicit inverse of the factored matrix (two triangular solves against I).
Eigen::MatrixXd inverse_psd(const CholFactor& factor);

/// log det(A + jitter*I) = 2 * sum(log diag(L)).
double logdet_psd(const CholFactor& factor);

/// Strict Cholesky with no jitter; returns false if the matrix is not PD.
/// Used where indefiniteness is an expected outcome rather than an error.
bool try_chol(const Eigen::MatrixXd& a, Eigen::MatrixXd& l_out);

bool is_symmetric(const Eigen::MatrixXd& a, double relative_tol = 1e-12);

}  // namespace sepdgp::numerics
