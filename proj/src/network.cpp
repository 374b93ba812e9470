#include "sepdgp/network.hpp"

#include <cmath>

namespace sepdgp::network {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

void validate_model(const DgpModel& model) {
    if (model.layers.empty()) throw DimensionError("model has no layers");
    if (model.layers.front().input_dim != model.input_dim) {
        throw DimensionError("first layer input dimension disagrees with model input_dim");
    }
    if (model.layers.back().output_dim != 1) {
        throw DimensionError("last layer must have a single output dimension");
    }
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        if (model.layers[l].output_dim != model.layers[l + 1].input_dim) {
            throw DimensionError("adjacent layer dimensions are incompatible");
        }
    }
    for (const auto& lay : model.layers) {
        if (lay.n_inducing() < 1) throw DimensionError("layer has no inducing points");
        if (lay.kernel.dim() != lay.input_dim) {
            throw DimensionError("kernel lengthscale count disagrees with layer input_dim");
        }
    }
}

std::size_t InferenceState::parameter_count() const {
    std::size_t count = 0;
    const auto site_size = [](const layer::GaussianSite& s) {
        return static_cast<std::size_t>(s.eta1.size() + s.eta2.size());
    };
    for (const auto& p : prior) count += site_size(p);
    for (const auto& per_layer : g)
        for (const auto& s : per_layer) count += site_size(s);
    for (const auto& per_layer : q)
        for (const auto& s : per_layer) count += site_size(s);
    return count;
}

int NetworkContext::jitter_events() const {
    int events = 0;
    for (const auto& l : layers) {
        if (l.jitter() > 0.0) ++events;
    }
    return events;
}

NetworkContext make_context(const DgpModel& model, Beliefs beliefs,
                            const numerics::JitterPolicy& policy) {
    validate_model(model);
    if (beliefs.size() != model.layers.size()) {
        throw DimensionError("make_context: one belief set per layer required");
    }
    NetworkContext ctx;
    ctx.layers.reserve(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        ctx.layers.push_back(layer::make_context(model.layers[l], std::move(beliefs[l]), policy));
    }
    return ctx;
}

Beliefs posterior_beliefs(const InferenceState& state) {
    Beliefs beliefs(state.q.size());
    for (std::size_t l = 0; l < state.q.size(); ++l) {
        beliefs[l].reserve(state.q[l].size());
        for (const auto& site : state.q[l]) {
            beliefs[l].push_back(layer::site_to_moments(site));
        }
    }
    return beliefs;
}

ForwardTrace forward_trace(const DgpModel& model, const NetworkContext& ctx,
                           const Eigen::VectorXd& x) {
    ForwardTrace t;
    t.first = layer::propagate_point(model.layers[0], ctx.layers[0], x);
    const kernel::MomentBelief* current = &t.first.out;
    t.rest.reserve(model.layers.size() - 1);
    for (std::size_t l = 1; l < model.layers.size(); ++l) {
        t.rest.push_back(layer::propagate_uncertain(model.layers[l], ctx.layers[l], *current));
        current = &t.rest.back().out;
    }
    return t;
}

kernel::MomentBelief forward_moments(const DgpModel& model, const NetworkContext& ctx,
                                     const Eigen::VectorXd& x) {
    return forward_trace(model, ctx, x).out();
}

double log_z(const DgpModel& model, const NetworkContext& ctx, const Eigen::VectorXd& x,
             double y) {
    const kernel::MomentBelief out = forward_moments(model, ctx, x);
    const double m = out.mean[0];
    const double v = out.variance[0];
    const double r = y - m;
    return -0.5 * (kLog2Pi + std::log(v)) - 0.5 * r * r / v;
}

NetworkGrads grad_log_z(const DgpModel& model, const NetworkContext& ctx,
                        const Eigen::VectorXd& x, double y) {
    const ForwardTrace trace = forward_trace(model, ctx, x);
    const double m_out = trace.out().mean[0];
    const double v_out = trace.out().variance[0];
    const double r = y - m_out;

    NetworkGrads grads;
    grads.logz = -0.5 * (kLog2Pi + std::log(v_out)) - 0.5 * r * r / v_out;
    grads.params.resize(model.layers.size());
    grads.belief.resize(model.layers.size());

    Eigen::VectorXd d_mean(1), d_var(1);
    d_mean[0] = r / v_out;
    d_var[0] = -0.5 / v_out + 0.5 * r * r / (v_out * v_out);

    for (std::size_t l = model.layers.size(); l-- > 1;) {
        const auto& lay = model.layers[l];
        const auto& unc = trace.rest[l - 1];
        const kernel::MomentBelief& q_in =
            (l == 1) ? trace.first.out : trace.rest[l - 2].out;
        layer::LayerGrads lg =
            layer::uncertain_backward(lay, ctx.layers[l], q_in, unc, d_mean, d_var);
        grads.params[l] = LayerParamGrads{lg.d_log_sf2, std::move(lg.d_log_lengthscales),
                                          lg.d_log_noise, std::move(lg.d_z)};
        grads.belief[l].resize(lay.output_dim);
        for (int j = 0; j < lay.output_dim; ++j) {
            grads.belief[l][j] =
                CavityGrad{std::move(lg.d_belief_mean[j]), std::move(lg.d_belief_cov[j])};
        }
        d_mean = std::move(lg.d_in_mean);
        d_var = std::move(lg.d_in_variance);
    }

    {
        const auto& lay = model.layers[0];
        layer::LayerGrads lg =
            layer::point_backward(lay, ctx.layers[0], x, trace.first, d_mean, d_var);
        grads.params[0] = LayerParamGrads{lg.d_log_sf2, std::move(lg.d_log_lengthscales),
                                          lg.d_log_noise, std::move(lg.d_z)};
        grads.belief[0].resize(lay.output_dim);
        for (int j = 0; j < lay.output_dim; ++j) {
            grads.belief[0][j] =
                CavityGrad{std::move(lg.d_belief_mean[j]), std::move(lg.d_belief_cov[j])};
        }
    }
    return grads;
}

Prediction predict(const DgpModel& model, const InferenceState& state,
                   const Eigen::VectorXd& x_raw) {
    const NetworkContext ctx = make_context(model, posterior_beliefs(state));
    const Eigen::VectorXd xs =
        model.standardization.apply_x(x_raw.transpose()).transpose();
    const kernel::MomentBelief out = forward_moments(model, ctx, xs);
    Prediction p;
    p.mean_std = out.mean[0];
    p.var_std = out.variance[0];
    const double sy = model.standardization.target_std;
    p.mean_raw = model.standardization.target_mean + sy * p.mean_std;
    p.var_raw = sy * sy * p.var_std;
    return p;
}

std::vector<Prediction> predict_batch(const DgpModel& model, const InferenceState& state,
                                      const Eigen::MatrixXd& x_raw) {
    const NetworkContext ctx = make_context(model, posterior_beliefs(state));
    const Eigen::MatrixXd xs = model.standardization.apply_x(x_raw);
    const double sy = model.standardization.target_std;
    std::vector<Prediction> out;
    out.reserve(xs.rows());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        const kernel::MomentBelief mb = forward_moments(model, ctx, xs.row(i).transpose());
        Prediction p;
        p.mean_std = mb.mean[0];
        p.var_std = mb.variance[0];
        p.mean_raw = model.standardization.target_mean + sy * p.mean_std;
        p.var_raw = sy * sy * p.var_std;
        out.push_back(p);
    }
    return out;
}

Eigen::Index parameter_count(const DgpModel& model) {
    Eigen::Index count = 0;
    for (const auto& lay : model.layers) {
        count += 1 + lay.kernel.dim() + 1 + lay.z.size();
    }
    return count;
}

Eigen::VectorXd pack_parameters(const DgpModel& model) {
    Eigen::VectorXd theta(parameter_count(model));
    Eigen::Index at = 0;
    for (const auto& lay : model.layers) {
        theta[at++] = lay.kernel.log_sf2;
        theta.segment(at, lay.kernel.dim()) = lay.kernel.log_lengthscales;
        at += lay.kernel.dim();
        theta[at++] = lay.log_noise;
        for (Eigen::Index i = 0; i < lay.z.rows(); ++i)
            for (Eigen::Index j = 0; j < lay.z.cols(); ++j) theta[at++] = lay.z(i, j);
    }
    return theta;
}

void unpack_parameters(const Eigen::VectorXd& theta, DgpModel& model) {
    if (theta.size() != parameter_count(model)) {
        throw DimensionError("unpack_parameters: length mismatch");
    }
    Eigen::Index at = 0;
    for (auto& lay : model.layers) {
        lay.kernel.log_sf2 = theta[at++];
        lay.kernel.log_lengthscales = theta.segment(at, lay.kernel.dim());
        at += lay.kernel.dim();
        lay.log_noise = theta[at++];
        for (Eigen::Index i = 0; i < lay.z.rows(); ++i)
            for (Eigen::Index j = 0; j < lay.z.cols(); ++j) lay.z(i, j) = theta[at++];
    }
}

Eigen::VectorXd pack_gradients(const DgpModel& model, const NetworkGrads& grads) {
    Eigen::VectorXd flat(parameter_count(model));
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& lay = model.layers[l];
        const auto& g = grads.params[l];
        flat[at++] = g.d_log_sf2;
        flat.segment(at, lay.kernel.dim()) = g.d_log_lengthscales;
        at += lay.kernel.dim();
        flat[at++] = g.d_log_noise;
        for (Eigen::Index i = 0; i < lay.z.rows(); ++i)
            for (Eigen::Index j = 0; j < lay.z.cols(); ++j) flat[at++] = g.d_z(i, j);
    }
    return flat;
}

}  // namespace sepdgp::network
