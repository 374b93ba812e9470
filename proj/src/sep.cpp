#include "sepdgp/sep.hpp"

#include <Eigen/LU>

namespace sepdgp::sep {

layer::BeliefMoments cavity(const layer::GaussianSite& q, const layer::GaussianSite& g) {
    const Eigen::MatrixXd lambda = q.eta2 - g.eta2;
    Eigen::MatrixXd l;
    if (!numerics::try_chol(lambda, l)) {
        throw CavityNotPdError("cavity precision lost positive definiteness");
    }
    numerics::CholFactor factor{std::move(l), 0.0};
    layer::BeliefMoments out;
    out.cov = numerics::inverse_psd(factor);
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    out.mean = out.cov * (q.eta1 - g.eta1);
    return out;
}

MatchedMoments moment_match(const layer::BeliefMoments& cav, const Eigen::VectorXd& d_mean,
                            const Eigen::MatrixXd& d_cov) {
    if (d_mean.size() != cav.mean.size() || d_cov.rows() != cav.cov.rows()) {
        throw DimensionError("moment_match: gradient shape mismatch");
    }
    MatchedMoments out;
    out.mean = cav.mean + cav.cov * d_mean;
    const Eigen::MatrixXd inner = d_mean * d_mean.transpose() - 2.0 * d_cov;
    Eigen::MatrixXd v = cav.cov - cav.cov * inner * cav.cov;
    out.cov = 0.5 * (v + v.transpose());
    return out;
}

layer::GaussianSite site_estimate(const layer::BeliefMoments& cav, const Eigen::VectorXd& d_mean,
                                  const Eigen::MatrixXd& d_cov) {
    const Eigen::Index m = cav.mean.size();
    const Eigen::MatrixXd g_mat = d_mean * d_mean.transpose() - 2.0 * d_cov;

    // The matched covariance must be PD for the site to exist.
    Eigen::MatrixXd v_new = cav.cov - cav.cov * g_mat * cav.cov;
    v_new = 0.5 * (v_new + v_new.transpose());
    Eigen::MatrixXd l;
    if (!numerics::try_chol(v_new, l)) {
        throw MomentMatchError("moment-matched covariance is not positive definite");
    }

    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) - g_mat * cav.cov;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    layer::GaussianSite theta_hat;
    theta_hat.eta2 = lu.solve(g_mat);
    theta_hat.eta2 = 0.5 * (theta_hat.eta2 + theta_hat.eta2.transpose());
    theta_hat.eta1 = lu.solve(g_mat * cav.mean + d_mean);
    return theta_hat;
}

layer::GaussianSite update_factor(const layer::GaussianSite& g,
                                  const layer::GaussianSite& theta_hat, double eta) {
    if (!(eta > 0.0 && eta <= 1.0)) {
        throw DimensionError("update_factor: damping must lie in (0, 1]");
    }
    layer::GaussianSite out;
    out.eta1 = (1.0 - eta) * g.eta1 + eta * theta_hat.eta1;
    out.eta2 = (1.0 - eta) * g.eta2 + eta * theta_hat.eta2;
    out.eta2 = 0.5 * (out.eta2 + out.eta2.transpose());
    return out;
}

bool rebuild_posterior(const layer::GaussianSite& prior, const layer::GaussianSite& g, long n,
                       layer::GaussianSite& q_out) {
    layer::GaussianSite q;
    q.eta1 = prior.eta1 + static_cast<double>(n) * g.eta1;
    q.eta2 = prior.eta2 + static_cast<double>(n) * g.eta2;
    q.eta2 = 0.5 * (q.eta2 + q.eta2.transpose());
    Eigen::MatrixXd l;
    if (!numerics::try_chol(q.eta2, l)) return false;
    q_out = std::move(q);
    return true;
}

network::Beliefs cavity_beliefs(const network::InferenceState& state) {
    network::Beliefs beliefs(state.q.size());
    for (std::size_t l = 0; l < state.q.size(); ++l) {
        beliefs[l].reserve(state.q[l].size());
        for (std::size_t j = 0; j < state.q[l].size(); ++j) {
            beliefs[l].push_back(cavity(state.q[l][j], state.g[l][j]));
        }
    }
    return beliefs;
}

}  // namespace sepdgp::sep
