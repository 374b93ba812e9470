#pragma once

#include <Eigen/Core>
#include <vector>

#include "sepdgp/kernel.hpp"
#include "sepdgp/numerics.hpp"

namespace sepdgp::layer {

/// One sparse GP layer. Output dimensions are independent GPs that share the
/// inducing inputs and kernel hyperparameters; each output dimension carries
/// its own belief over the inducing outputs.
struct SparseGpLayer {
    int input_dim = 0;
    int output_dim = 1;
    Eigen::MatrixXd z;              // M x input_dim inducing inputs
    kernel::KernelParams kernel;
    double log_noise = 0.0;

    Eigen::Index n_inducing() const { return z.rows(); }
    double noise() const { return std::exp(log_noise); }
};

/// Gaussian in natural parameters: density proportional to
/// exp(-1/2 u' eta2 u + eta1' u). eta2 is the precision matrix itself;
/// it must be PD for posterior and cavity roles but may be indefinite for
/// the averaged data factor.
struct GaussianSite {
    Eigen::VectorXd eta1;
    Eigen::MatrixXd eta2;

    static GaussianSite zero(Eigen::Index m) {
        return GaussianSite{Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, m)};
    }
};

/// Moment-space view of a Gaussian belief over inducing outputs.
struct BeliefMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Per-layer snapshot shared by every datapoint of a minibatch: the factored
/// kernel matrix, its explicit inverse, and belief-derived products. Rebuilt
/// whenever parameters or beliefs change.
struct LayerContext {
    numerics::CholFactor kzz;            // factor of Kzz + jitter*I
    Eigen::MatrixXd w;                   // (Kzz + jitter*I)^-1
    std::vector<BeliefMoments> belief;   // per output dim
    std::vector<Eigen::VectorXd> alpha;  // W * mean_j
    std::vector<Eigen::MatrixXd> s;      // V_j + m_j m_j'
    std::vector<Eigen::MatrixXd> q_ws;   // W * S_j
    std::vector<Eigen::MatrixXd> b;      // W S_j W - W

    double jitter() const { return kzz.jitter; }
};

LayerContext make_context(const SparseGpLayer& layer, std::vector<BeliefMoments> beliefs,
                          const numerics::JitterPolicy& policy = {});

/// Forward results keep the intermediates the backward pass needs.
struct PointTrace {
    Eigen::VectorXd kxz;  // k(x, z_m)
    Eigen::VectorXd a;    // W kxz
    kernel::MomentBelief out;
};

struct UncertainTrace {
    double psi0v = 0.0;
    Eigen::VectorXd psi1v;
    Eigen::MatrixXd psi2v;
    kernel::MomentBelief out;
};

/// Output moments for a certain input x:
///   mean_j = kxz' W m_j
///   var_j  = noise + k(x,x) - kxz' W kxz + a' V_j a
/// Throws NumericalVarianceError if any variance falls below 1e-12.
PointTrace propagate_point(const SparseGpLayer& layer, const LayerContext& ctx,
                           const Eigen::VectorXd& x);

/// Output moments for a Gaussian input belief, by moment matching:
///   mean_j = psi1' W m_j
///   var_j  = noise + psi0 + <B_j, psi2> - mean_j^2
UncertainTrace propagate_uncertain(const SparseGpLayer& layer, const LayerContext& ctx,
                                   const kernel::MomentBelief& q_in);

/// Reverse accumulation through one layer. d_in_* are populated only by the
/// uncertain-input path.
struct LayerGrads {
    double d_log_sf2 = 0.0;
    Eigen::VectorXd d_log_lengthscales;
    double d_log_noise = 0.0;
    Eigen::MatrixXd d_z;
    std::vector<Eigen::VectorXd> d_belief_mean;
    std::vector<Eigen::MatrixXd> d_belief_cov;
    Eigen::VectorXd d_in_mean;
    Eigen::VectorXd d_in_variance;
};

LayerGrads point_backward(const SparseGpLayer& layer, const LayerContext& ctx,
                          const Eigen::VectorXd& x, const PointTrace& trace,
                          const Eigen::VectorXd& d_out_mean, const Eigen::VectorXd& d_out_var);

LayerGrads uncertain_backward(const SparseGpLayer& layer, const LayerContext& ctx,
                              const kernel::MomentBelief& q_in, const UncertainTrace& trace,
                              const Eigen::VectorXd& d_out_mean,
                              const Eigen::VectorXd& d_out_var);

/// Moment view of a site; strict Cholesky, throws FactorizationError when the
/// precision is not PD.
BeliefMoments site_to_moments(const GaussianSite& site);

/// Natural parameters from moments; strict Cholesky on the covariance.
GaussianSite site_from_moments(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

}  // namespace sepdgp::layer
