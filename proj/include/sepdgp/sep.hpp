#pragma once

#include <Eigen/Core>

#include "sepdgp/layer.hpp"
#include "sepdgp/network.hpp"

namespace sepdgp::sep {

/// Knobs for the averaged-factor update. damping is the per-datapoint step
/// eta in (0, 1]; 0 means "choose 1/N at training time". In per-minibatch
/// mode one damped update of size min(1, damping * batch) is applied to the
/// average of the per-datapoint site estimates.
struct SepConfig {
    double damping = 0.0;
    bool skip_on_failure = true;
    bool update_per_minibatch = true;
    bool parallel_within_minibatch = false;
};

/// Counters exposed by every sweep; skipped covers cavity, moment-match and
/// variance failures, reverted covers factor updates undone by a non-PD
/// rebuilt posterior.
struct SepCounters {
    long skipped = 0;
    long reverted = 0;
    long accepted = 0;
};

/// Remove one copy of the averaged factor from the posterior:
/// natural params theta_cav = theta_q - theta_g, returned in moment form.
/// Throws CavityNotPdError when the remaining precision is not PD.
layer::BeliefMoments cavity(const layer::GaussianSite& q, const layer::GaussianSite& g);

/// Moment-matched posterior from the cavity and the derivatives of log Z:
///   m = m_cav + V_cav dm
///   V = V_cav - V_cav (dm dm' - 2 dV) V_cav
/// The result is symmetrized; positive definiteness is the caller's check
/// (site_from_moments throws when V is not PD).
struct MatchedMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

MatchedMoments moment_match(const layer::BeliefMoments& cav, const Eigen::VectorXd& d_mean,
                            const Eigen::MatrixXd& d_cov);

/// Site estimate theta_hat = theta(q_new) - theta(cavity), evaluated through
/// the push-through identity
///   theta_hat.Lambda = (I - G V_cav)^-1 G,      G = dm dm' - 2 dV,
///   theta_hat.eta    = (I - G V_cav)^-1 (G m_cav + dm),
/// which avoids subtracting two large precision matrices; with an
/// ill-conditioned cavity the naive subtraction leaks indefinite noise into
/// the averaged factor. Throws MomentMatchError when the moment-matched
/// covariance is not PD.
layer::GaussianSite site_estimate(const layer::BeliefMoments& cav, const Eigen::VectorXd& d_mean,
                                  const Eigen::MatrixXd& d_cov);

/// Damped averaged-factor update g_new = (1 - eta) g + eta theta_hat.
layer::GaussianSite update_factor(const layer::GaussianSite& g,
                                  const layer::GaussianSite& theta_hat, double eta);

/// q = prior + n * g in natural parameters; returns false (leaving q_out
/// untouched) when the rebuilt precision is not PD.
bool rebuild_posterior(const layer::GaussianSite& prior, const layer::GaussianSite& g, long n,
                       layer::GaussianSite& q_out);

/// Cavity beliefs for every layer and output dimension of the state.
network::Beliefs cavity_beliefs(const network::InferenceState& state);

}  // namespace sepdgp::sep
