#pragma once

#include <Eigen/Core>
#include <vector>

#include "sepdgp/data.hpp"
#include "sepdgp/layer.hpp"

namespace sepdgp::network {

/// A stack of sparse GP layers; the last layer has a single output.
struct DgpModel {
    std::vector<layer::SparseGpLayer> layers;
    int input_dim = 0;
    data::Standardizer standardization;

    int n_layers() const { return static_cast<int>(layers.size()); }
};

void validate_model(const DgpModel& model);

/// Posterior bookkeeping for SEP: one averaged factor g and posterior q per
/// layer per output dimension, plus the prior N(0, Kzz) per layer. The
/// identity q = prior + n_train * g (natural parameters) is maintained by
/// every accepting update, and the state size never depends on n_train.
struct InferenceState {
    std::vector<layer::GaussianSite> prior;               // per layer
    std::vector<std::vector<layer::GaussianSite>> g;      // per layer, per dim
    std::vector<std::vector<layer::GaussianSite>> q;      // per layer, per dim
    std::vector<double> prior_jitter;                     // jitter used per layer
    long n_train = 0;

    std::size_t parameter_count() const;
};

/// Per-layer per-output-dim Gaussian beliefs over inducing outputs.
using Beliefs = std::vector<std::vector<layer::BeliefMoments>>;

/// Snapshot of everything a minibatch shares: factored kernel matrices and
/// belief-derived products per layer. Immutable during evaluation.
struct NetworkContext {
    std::vector<layer::LayerContext> layers;

    int jitter_events() const;
};

NetworkContext make_context(const DgpModel& model, Beliefs beliefs,
                            const numerics::JitterPolicy& policy = {});

/// Belief extraction from the state (strict PD; throws FactorizationError).
Beliefs posterior_beliefs(const InferenceState& state);

struct ForwardTrace {
    layer::PointTrace first;
    std::vector<layer::UncertainTrace> rest;

    const kernel::MomentBelief& out() const {
        return rest.empty() ? first.out : rest.back().out;
    }
};

ForwardTrace forward_trace(const DgpModel& model, const NetworkContext& ctx,
                           const Eigen::VectorXd& x);

/// Moments of the projected Gaussian over the output: layer 1 sees the input
/// exactly, deeper layers consume the previous layer's moments.
kernel::MomentBelief forward_moments(const DgpModel& model, const NetworkContext& ctx,
                                     const Eigen::VectorXd& x);

/// log N(y; m_L, v_L) with moments from forward_moments; v_L already includes
/// the output-layer noise.
double log_z(const DgpModel& model, const NetworkContext& ctx, const Eigen::VectorXd& x,
             double y);

struct LayerParamGrads {
    double d_log_sf2 = 0.0;
    Eigen::VectorXd d_log_lengthscales;
    double d_log_noise = 0.0;
    Eigen::MatrixXd d_z;
};

struct CavityGrad {
    Eigen::VectorXd d_mean;
    Eigen::MatrixXd d_cov;
};

struct NetworkGrads {
    double logz = 0.0;
    std::vector<LayerParamGrads> params;          // per layer
    std::vector<std::vector<CavityGrad>> belief;  // per layer, per dim
};

/// Reverse accumulation of log Z through the whole moment chain, with respect
/// to every kernel parameter, noise, inducing input and belief moment.
NetworkGrads grad_log_z(const DgpModel& model, const NetworkContext& ctx,
                        const Eigen::VectorXd& x, double y);

struct Prediction {
    double mean_std = 0.0;
    double var_std = 0.0;
    double mean_raw = 0.0;
    double var_raw = 0.0;
};

/// Predictive distribution at a raw-scale input, using the posterior q.
Prediction predict(const DgpModel& model, const InferenceState& state,
                   const Eigen::VectorXd& x_raw);

/// Batched variant reusing one posterior context.
std::vector<Prediction> predict_batch(const DgpModel& model, const InferenceState& state,
                                      const Eigen::MatrixXd& x_raw);

/// Flat parameter vector layout, per layer:
/// [log_sf2, log_lengthscales..., log_noise, Z row-major...].
Eigen::Index parameter_count(const DgpModel& model);
Eigen::VectorXd pack_parameters(const DgpModel& model);
void unpack_parameters(const Eigen::VectorXd& theta, DgpModel& model);
Eigen::VectorXd pack_gradients(const DgpModel& model, const NetworkGrads& grads);

}  // namespace sepdgp::network
