#pragma once

#include <Eigen/Core>

#include "sepdgp/errors.hpp"

namespace sepdgp::kernel {

/// RBF-ARD hyperparameters in log space:
///   k(x, x') = sf2 * exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2)
/// with sf2 = exp(log_sf2) and l_d = exp(log_lengthscales[d]).
struct KernelParams {
    double log_sf2 = 0.0;
    Eigen::VectorXd log_lengthscales;

    Eigen::Index dim() const { return log_lengthscales.size(); }
    double sf2() const { return std::exp(log_sf2); }
    /// Squared lengthscales l_d^2.
    Eigen::VectorXd lengthscales2() const {
        return (2.0 * log_lengthscales.array()).exp();
    }
};

/// Diagonal Gaussian belief over a layer input or hidden activation.
struct MomentBelief {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;

    Eigen::Index dim() const { return mean.size(); }
};

double kernel_eval(const KernelParams& p, const Eigen::VectorXd& x, const Eigen::VectorXd& x2);

/// N x M matrix with entry (i, j) = k(X.row(i), X2.row(j)).
Eigen::MatrixXd gram(const KernelParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& x2);

/// E_q[k(h, h)]; equals sf2 for a stationary kernel, independent of q.
double psi0(const KernelParams& p, const MomentBelief& q);

/// psi1[m] = E_q[k(h, Z.row(m))], closed form for RBF-ARD.
Eigen::VectorXd psi1(const KernelParams& p, const Eigen::MatrixXd& z, const MomentBelief& q);

/// psi2(m, m') = E_q[k(Z.row(m), h) k(h, Z.row(m'))]; symmetric PSD.
Eigen::MatrixXd psi2(const KernelParams& p, const Eigen::MatrixXd& z, const MomentBelief& q);

/// Gradients of the scalar  w0*psi0 + W1.psi1 + <W2, psi2>  with respect to
/// every kernel input. Exposing the weighted form keeps one code path for
/// both the finite-difference contract and reverse accumulation through the
/// network, where (w0, W1, W2) are the upstream adjoints.
struct PsiGrads {
    double d_log_sf2 = 0.0;
    Eigen::VectorXd d_log_lengthscales;
    Eigen::MatrixXd d_z;
    Eigen::VectorXd d_mean;
    Eigen::VectorXd d_variance;
};

PsiGrads psi_grads(const KernelParams& p, const Eigen::MatrixXd& z, const MomentBelief& q,
                   double w0, const Eigen::VectorXd& w1, const Eigen::MatrixXd& w2);

/// Gradients of <W, gram(X, X2)> w.r.t. the kernel parameters and both input
/// matrices; the adjoint counterpart of gram().
struct GramGrads {
    double d_log_sf2 = 0.0;
    Eigen::VectorXd d_log_lengthscales;
    Eigen::MatrixXd d_x;
    Eigen::MatrixXd d_x2;
};

GramGrads gram_grads(const KernelParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& x2,
                     const Eigen::MatrixXd& w);

}  // namespace sepdgp::kernel
