#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "sepdgp/arch.hpp"
#include "sepdgp/network.hpp"
#include "sepdgp/rng.hpp"
#include "sepdgp/sep.hpp"

namespace sepdgp::trainer {

struct TrainConfig {
    int minibatch_size = 50;
    long iterations = 4000;
    double learning_rate = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    arch::Architecture architecture;
    sep::SepConfig sep;
};

struct AdamState {
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    long step_count = 0;

    static AdamState zeros(Eigen::Index n) {
        return AdamState{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
    }
};

/// One bias-corrected Adam ascent step (the objective is maximized).
/// Throws NonFiniteGradientError on NaN/inf gradients, leaving state alone.
Eigen::VectorXd adam_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grads,
                          AdamState& state, const TrainConfig& cfg);

struct InitResult {
    network::DgpModel model;
    network::InferenceState state;
};

/// Initialization heuristics. Layer 1: per-dimension median pairwise distance
/// lengthscales (subsampled to 1000 points) and k-means inducing inputs
/// (10 iterations, seeded from data points). Higher layers start as a
/// near-identity map: long lengthscales (20.0) and inducing inputs drawn
/// uniformly from [-1, 1]. Signal variance starts at 1, noise at 0.01 for
/// hidden layers and 0.1 for the output layer. The averaged factor starts at
/// zero, so q = prior.
InitResult init_model(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const arch::Architecture& a, std::uint64_t seed);

/// Recompute priors from the current kernel matrices and rebuild q = prior +
/// n*g for every site. Returns false if any rebuilt posterior is not PD.
bool refresh_posteriors(const network::DgpModel& model, network::InferenceState& state);

struct IterationRecord {
    long iter = 0;
    double mean_logz = 0.0;
    long skips = 0;
    int jitter_events = 0;
};

struct TrainResult {
    network::DgpModel model;
    network::InferenceState state;
    std::vector<IterationRecord> history;
    sep::SepCounters counters;
};

/// Evaluation of one minibatch against a frozen (model, beliefs) snapshot:
/// scaled hyperparameter gradient, per-site averaged site estimates, and the
/// bookkeeping train() records. Exposed so tests can check the gradient
/// scaling contract directly.
struct MinibatchEval {
    Eigen::VectorXd hyper_grad;   // (n_total / batch) * sum of per-point gradients
    double mean_logz = 0.0;       // over points whose gradient succeeded
    long grad_ok = 0;
    long sep_ok = 0;
    long skips = 0;
    std::vector<std::vector<layer::GaussianSite>> theta_hat_avg;  // per layer per dim
    // Unscaled sums of the per-point cavity-moment gradients, needed by the
    // energy correction below.
    std::vector<std::vector<network::CavityGrad>> cavity_grad_sum;
};

MinibatchEval compute_minibatch(const network::DgpModel& model,
                                const network::InferenceState& state,
                                const network::NetworkContext& ctx,
                                const network::Beliefs& cavities, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y,
                                const std::vector<Eigen::Index>& rows, long n_total,
                                bool parallel);

/// Gradient of the tied-factor EP energy
///   F = sum_n log Z_n + N Phi(cavity) - (N-1) Phi(q) - Phi(prior)
/// with respect to the flat parameter vector, given the scaled log Z sums in
/// `eval`. The log-partition terms anchor the prior: q and the cavity are
/// rebuilt from the theta-dependent prior after every step, and ascending
/// sum log Z alone (cavity frozen) measurably diverges. The correction
/// vanishes when g = 0, where F reduces to sum log Z.
Eigen::VectorXd energy_gradient(const network::DgpModel& model,
                                const network::InferenceState& state,
                                const network::NetworkContext& ctx,
                                const network::Beliefs& cavities,
                                const MinibatchEval& eval, long n_total, double scale);

/// One pass of SEP updates over the data in index order, parameters frozen.
sep::SepCounters sep_sweep(const network::DgpModel& model, network::InferenceState& state,
                           const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const sep::SepConfig& cfg, int minibatch_size);

/// Full training loop on raw data: standardizes, initializes, then iterates
/// minibatch SEP updates and Adam hyperparameter steps.
TrainResult train(const Eigen::MatrixXd& x_raw, const Eigen::VectorXd& y_raw,
                  const TrainConfig& cfg);

/// K-means with a fixed iteration budget, seeded data-point initialization.
Eigen::MatrixXd kmeans(const Eigen::MatrixXd& x, int k, int iterations, rng::Rng& r);

/// Per-dimension median pairwise absolute distance, subsampled to at most
/// max_points rows; zero medians fall back to 1.
Eigen::VectorXd median_lengthscales(const Eigen::MatrixXd& x, rng::Rng& r,
                                    Eigen::Index max_points = 1000);

}  // namespace sepdgp::trainer
