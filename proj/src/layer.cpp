#include "sepdgp/layer.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

namespace sepdgp::layer {

namespace {

constexpr double kVarianceFloor = 1e-12;

void check_variance(double var, int dim_index) {
    if (!(var > kVarianceFloor)) {
        std::ostringstream msg;
        msg << "propagated variance " << var << " below floor for output dim " << dim_index;
        throw NumericalVarianceError(msg.str());
    }
}

}  // namespace

LayerContext make_context(const SparseGpLayer& layer, std::vector<BeliefMoments> beliefs,
                          const numerics::JitterPolicy& policy) {
    const Eigen::Index m = layer.n_inducing();
    if (static_cast<int>(beliefs.size()) != layer.output_dim) {
        throw DimensionError("make_context: one belief per output dimension required");
    }
    for (const auto& bel : beliefs) {
        if (bel.mean.size() != m || bel.cov.rows() != m || bel.cov.cols() != m) {
            throw DimensionError("make_context: belief size does not match inducing count");
        }
    }
    LayerContext ctx;
    ctx.kzz = numerics::chol_psd(kernel::gram(layer.kernel, layer.z, layer.z), policy);
    ctx.w = numerics::inverse_psd(ctx.kzz);
    ctx.belief = std::move(beliefs);
    ctx.alpha.reserve(ctx.belief.size());
    ctx.s.reserve(ctx.belief.size());
    ctx.q_ws.reserve(ctx.belief.size());
    ctx.b.reserve(ctx.belief.size());
    for (const auto& bel : ctx.belief) {
        ctx.alpha.push_back(ctx.w * bel.mean);
        ctx.s.push_back(bel.cov + bel.mean * bel.mean.transpose());
        ctx.q_ws.push_back(ctx.w * ctx.s.back());
        ctx.b.push_back(ctx.q_ws.back() * ctx.w - ctx.w);
    }
    return ctx;
}

PointTrace propagate_point(const SparseGpLayer& layer, const LayerContext& ctx,
                           const Eigen::VectorXd& x) {
    if (x.size() != layer.input_dim) {
        throw DimensionError("propagate_point: input dimension mismatch");
    }
    PointTrace t;
    t.kxz = kernel::gram(layer.kernel, x.transpose(), layer.z).transpose();
    t.a = ctx.w * t.kxz;
    const double kxx = layer.kernel.sf2();
    const double noise = layer.noise();
    const double fitc = kxx - t.kxz.dot(t.a);
    t.out.mean.resize(layer.output_dim);
    t.out.variance.resize(layer.output_dim);
    for (int j = 0; j < layer.output_dim; ++j) {
        t.out.mean[j] = t.a.dot(ctx.belief[j].mean);
        const double var = noise + fitc + t.a.dot(ctx.belief[j].cov * t.a);
        check_variance(var, j);
        t.out.variance[j] = var;
    }
    return t;
}

UncertainTrace propagate_uncertain(const SparseGpLayer& layer, const LayerContext& ctx,
                                   const kernel::MomentBelief& q_in) {
    if (q_in.dim() != layer.input_dim) {
        throw DimensionError("propagate_uncertain: input belief dimension mismatch");
    }
    UncertainTrace t;
    t.psi0v = kernel::psi0(layer.kernel, q_in);
    t.psi1v = kernel::psi1(layer.kernel, layer.z, q_in);
    t.psi2v = kernel::psi2(layer.kernel, layer.z, q_in);
    const double noise = layer.noise();
    t.out.mean.resize(layer.output_dim);
    t.out.variance.resize(layer.output_dim);
    for (int j = 0; j < layer.output_dim; ++j) {
        const double mean = t.psi1v.dot(ctx.alpha[j]);
        const double var = noise + t.psi0v + ctx.b[j].cwiseProduct(t.psi2v).sum() - mean * mean;
        check_variance(var, j);
        t.out.mean[j] = mean;
        t.out.variance[j] = var;
    }
    return t;
}

LayerGrads point_backward(const SparseGpLayer& layer, const LayerContext& ctx,
                          const Eigen::VectorXd& x, const PointTrace& trace,
                          const Eigen::VectorXd& d_out_mean, const Eigen::VectorXd& d_out_var) {
    const Eigen::Index m = layer.n_inducing();
    LayerGrads g;
    g.d_z = Eigen::MatrixXd::Zero(m, layer.input_dim);
    g.d_log_lengthscales = Eigen::VectorXd::Zero(layer.input_dim);
    g.d_belief_mean.resize(layer.output_dim);
    g.d_belief_cov.resize(layer.output_dim);

    const double sum_dv = d_out_var.sum();
    g.d_log_noise = layer.noise() * sum_dv;
    g.d_log_sf2 = layer.kernel.sf2() * sum_dv;  // k(x,x) term

    Eigen::VectorXd d_a = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd d_kxz = -sum_dv * trace.a;
    for (int j = 0; j < layer.output_dim; ++j) {
        const double dm = d_out_mean[j];
        const double dv = d_out_var[j];
        g.d_belief_mean[j] = dm * trace.a;
        g.d_belief_cov[j] = dv * (trace.a * trace.a.transpose());
        d_a += dm * ctx.belief[j].mean + dv * (2.0 * (ctx.belief[j].cov * trace.a) - trace.kxz);
    }
    const Eigen::VectorXd w_da = ctx.w * d_a;
    d_kxz += w_da;
    // W depends on Kzz: dK = -W dW W with dW = d_a kxz'.
    const Eigen::MatrixXd d_keff = -w_da * trace.a.transpose();
    g.d_log_sf2 += ctx.jitter() * d_keff.trace();  // jitter scales with sf2

    const auto gz = kernel::gram_grads(layer.kernel, layer.z, layer.z, d_keff);
    g.d_log_sf2 += gz.d_log_sf2;
    g.d_log_lengthscales += gz.d_log_lengthscales;
    g.d_z += gz.d_x + gz.d_x2;

    const auto gk =
        kernel::gram_grads(layer.kernel, x.transpose(), layer.z, d_kxz.transpose());
    g.d_log_sf2 += gk.d_log_sf2;
    g.d_log_lengthscales += gk.d_log_lengthscales;
    g.d_z += gk.d_x2;
    return g;
}

LayerGrads uncertain_backward(const SparseGpLayer& layer, const LayerContext& ctx,
                              const kernel::MomentBelief& q_in, const UncertainTrace& trace,
                              const Eigen::VectorXd& d_out_mean,
                              const Eigen::VectorXd& d_out_var) {
    const Eigen::Index m = layer.n_inducing();
    LayerGrads g;
    g.d_z = Eigen::MatrixXd::Zero(m, layer.input_dim);
    g.d_log_lengthscales = Eigen::VectorXd::Zero(layer.input_dim);
    g.d_belief_mean.resize(layer.output_dim);
    g.d_belief_cov.resize(layer.output_dim);

    const double sum_dv = d_out_var.sum();
    g.d_log_noise = layer.noise() * sum_dv;

    const Eigen::MatrixXd p = ctx.w * trace.psi2v * ctx.w;  // W psi2 W
    const Eigen::VectorXd w_psi1 = ctx.w * trace.psi1v;

    Eigen::VectorXd d_psi1 = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd d_psi2 = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd d_w = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < layer.output_dim; ++j) {
        const double dv = d_out_var[j];
        const double g_mean = d_out_mean[j] - 2.0 * trace.out.mean[j] * dv;
        d_psi1 += g_mean * ctx.alpha[j];
        d_psi2 += dv * ctx.b[j];
        g.d_belief_mean[j] = g_mean * w_psi1 + 2.0 * dv * (p * ctx.belief[j].mean);
        g.d_belief_cov[j] = dv * p;
        const Eigen::MatrixXd psi2_q = trace.psi2v * ctx.q_ws[j];
        d_w += g_mean * (trace.psi1v * ctx.belief[j].mean.transpose()) +
               dv * (psi2_q + psi2_q.transpose() - trace.psi2v);
    }
    const Eigen::MatrixXd d_keff = -(ctx.w * d_w * ctx.w);
    g.d_log_sf2 = ctx.jitter() * d_keff.trace();

    const auto gz = kernel::gram_grads(layer.kernel, layer.z, layer.z, d_keff);
    g.d_log_sf2 += gz.d_log_sf2;
    g.d_log_lengthscales += gz.d_log_lengthscales;
    g.d_z += gz.d_x + gz.d_x2;

    const auto gpsi = kernel::psi_grads(layer.kernel, layer.z, q_in, sum_dv, d_psi1, d_psi2);
    g.d_log_sf2 += gpsi.d_log_sf2;
    g.d_log_lengthscales += gpsi.d_log_lengthscales;
    g.d_z += gpsi.d_z;
    g.d_in_mean = gpsi.d_mean;
    g.d_in_variance = gpsi.d_variance;
    return g;
}

BeliefMoments site_to_moments(const GaussianSite& site) {
    Eigen::MatrixXd l;
    if (!numerics::try_chol(site.eta2, l)) {
        throw FactorizationError("site_to_moments: precision is not positive definite");
    }
    numerics::CholFactor factor{std::move(l), 0.0};
    BeliefMoments moments;
    moments.cov = numerics::inverse_psd(factor);
    moments.mean = moments.cov * site.eta1;
    return moments;
}

GaussianSite site_from_moments(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    Eigen::MatrixXd l;
    if (!numerics::try_chol(cov, l)) {
        throw FactorizationError("site_from_moments: covariance is not positive definite");
    }
    numerics::CholFactor factor{std::move(l), 0.0};
    GaussianSite site;
    site.eta2 = numerics::inverse_psd(factor);
    site.eta2 = 0.5 * (site.eta2 + site.eta2.transpose());
    site.eta1 = site.eta2 * mean;
    return site;
}

}  // namespace sepdgp::layer
