#include "sepdgp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <thread>

namespace sepdgp::trainer {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void parallel_for(Eigen::Index n, bool parallel, const std::function<void(Eigen::Index)>& fn) {
    if (!parallel || n < 2) {
        for (Eigen::Index i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const Eigen::Index n_threads = std::min<Eigen::Index>(hw, n);
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
    workers.reserve(static_cast<std::size_t>(n_threads));
    for (Eigen::Index t = 0; t < n_threads; ++t) {
        workers.emplace_back([&, t] {
            const Eigen::Index lo = t * n / n_threads;
            const Eigen::Index hi = (t + 1) * n / n_threads;
            try {
                for (Eigen::Index i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

double resolve_damping(const sep::SepConfig& cfg, long n) {
    const double eta = cfg.damping > 0.0 ? cfg.damping : 1.0 / static_cast<double>(n);
    if (!(eta > 0.0 && eta <= 1.0)) {
        throw DimensionError("sep damping must lie in (0, 1]");
    }
    return eta;
}

/// Damped factor update for every site, rebuilding q = prior + n g; sites
/// whose rebuilt posterior is not PD keep their previous factor.
void apply_factor_update(network::InferenceState& state,
                         const std::vector<std::vector<layer::GaussianSite>>& theta_hat,
                         double eta, sep::SepCounters& counters) {
    for (std::size_t l = 0; l < state.g.size(); ++l) {
        for (std::size_t j = 0; j < state.g[l].size(); ++j) {
            const layer::GaussianSite g_new =
                sep::update_factor(state.g[l][j], theta_hat[l][j], eta);
            layer::GaussianSite q_new;
            if (sep::rebuild_posterior(state.prior[l], g_new, state.n_train, q_new)) {
                state.g[l][j] = g_new;
                state.q[l][j] = std::move(q_new);
                ++counters.accepted;
            } else {
                ++counters.reverted;
            }
        }
    }
}

struct PointResult {
    bool grad_ok = false;
    bool sep_ok = false;
    double logz = kNan;
    Eigen::VectorXd flat_grad;
    std::vector<std::vector<network::CavityGrad>> cavity;
    std::vector<std::vector<layer::GaussianSite>> theta_hat;
};

}  // namespace

Eigen::VectorXd adam_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grads,
                          AdamState& state, const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw DimensionError("adam_step: shape mismatch");
    }
    if (!grads.allFinite()) {
        throw NonFiniteGradientError("adam_step: gradient contains NaN or inf");
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    state.first_moment = cfg.adam_beta1 * state.first_moment + (1.0 - cfg.adam_beta1) * grads;
    state.second_moment = cfg.adam_beta2 * state.second_moment +
                          (1.0 - cfg.adam_beta2) * grads.array().square().matrix();
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    const Eigen::ArrayXd m_hat = state.first_moment.array() / c1;
    const Eigen::ArrayXd v_hat = state.second_moment.array() / c2;
    return params.array() + cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
}

Eigen::VectorXd median_lengthscales(const Eigen::MatrixXd& x, rng::Rng& r,
                                    Eigen::Index max_points) {
    const Eigen::Index n = x.rows();
    std::vector<Eigen::Index> rows;
    if (n <= max_points) {
        rows.resize(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    } else {
        const auto perm = r.permutation(static_cast<std::size_t>(n));
        rows.assign(perm.begin(), perm.begin() + max_points);
    }
    const std::size_t k = rows.size();
    Eigen::VectorXd scales(x.cols());
    std::vector<double> dists;
    dists.reserve(k * (k - 1) / 2);
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
        dists.clear();
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                dists.push_back(std::abs(x(rows[i], d) - x(rows[j], d)));
            }
        }
        std::sort(dists.begin(), dists.end());
        double median = 0.0;
        if (!dists.empty()) {
            const std::size_t half = dists.size() / 2;
            median = (dists.size() % 2 == 1) ? dists[half]
                                             : 0.5 * (dists[half - 1] + dists[half]);
        }
        scales[d] = median > 0.0 ? median : 1.0;
    }
    return scales;
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& x, int k, int iterations, rng::Rng& r) {
    const Eigen::Index n = x.rows();
    if (k < 1 || k > n) throw DimensionError("kmeans: k out of range");
    const auto perm = r.permutation(static_cast<std::size_t>(n));
    Eigen::MatrixXd centers(k, x.cols());
    for (int c = 0; c < k; ++c) centers.row(c) = x.row(perm[static_cast<std::size_t>(c)]);

    std::vector<int> assignment(static_cast<std::size_t>(n), 0);
    for (int it = 0; it < iterations; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                const double d2 = (x.row(i) - centers.row(c)).squaredNorm();
                if (d2 < best) {
                    best = d2;
                    best_c = c;
                }
            }
            assignment[static_cast<std::size_t>(i)] = best_c;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assignment[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            }
        }
    }
    return centers;
}

InitResult init_model(const Eigen::MatrixXd& x, const Eigen::VectorXd&,
                      const arch::Architecture& a, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (a.final_inducing < 1) throw DimensionError("init_model: architecture not set");
    const int first_m = a.hidden.empty() ? a.final_inducing : a.hidden.front().n_inducing;
    if (first_m > n) {
        throw DimensionError("init_model: first layer has more inducing points than datapoints");
    }

    rng::Rng r(seed);
    InitResult out;
    out.model.input_dim = static_cast<int>(d);
    out.model.standardization = data::Standardizer::identity(d);

    std::vector<int> in_dims{static_cast<int>(d)};
    std::vector<int> out_dims;
    std::vector<int> inducing;
    for (const auto& h : a.hidden) {
        out_dims.push_back(h.dim);
        in_dims.push_back(h.dim);
        inducing.push_back(h.n_inducing);
    }
    out_dims.push_back(1);
    inducing.push_back(a.final_inducing);

    const int n_layers = static_cast<int>(out_dims.size());
    for (int l = 0; l < n_layers; ++l) {
        layer::SparseGpLayer lay;
        lay.input_dim = in_dims[static_cast<std::size_t>(l)];
        lay.output_dim = out_dims[static_cast<std::size_t>(l)];
        lay.kernel.log_sf2 = 0.0;
        const bool is_output = (l == n_layers - 1);
        lay.log_noise = std::log(is_output ? 0.1 : 0.01);
        if (l == 0) {
            lay.kernel.log_lengthscales = median_lengthscales(x, r).array().log();
            lay.z = kmeans(x, inducing[0], 10, r);
        } else {
            lay.kernel.log_lengthscales =
                Eigen::VectorXd::Constant(lay.input_dim, std::log(10.0 * 2.0));
            lay.z.resize(inducing[static_cast<std::size_t>(l)], lay.input_dim);
            for (Eigen::Index i = 0; i < lay.z.rows(); ++i)
                for (Eigen::Index j = 0; j < lay.z.cols(); ++j) lay.z(i, j) = r.uniform(-1.0, 1.0);
        }
        out.model.layers.push_back(std::move(lay));
    }
    network::validate_model(out.model);

    out.state.n_train = static_cast<long>(n);
    out.state.g.resize(out.model.layers.size());
    out.state.q.resize(out.model.layers.size());
    for (std::size_t l = 0; l < out.model.layers.size(); ++l) {
        const Eigen::Index m = out.model.layers[l].n_inducing();
        const int dims = out.model.layers[l].output_dim;
        out.state.g[l].assign(static_cast<std::size_t>(dims), layer::GaussianSite::zero(m));
        out.state.q[l].assign(static_cast<std::size_t>(dims), layer::GaussianSite::zero(m));
    }
    if (!refresh_posteriors(out.model, out.state)) {
        throw FactorizationError("init_model: initial posterior not PD");
    }
    return out;
}

bool refresh_posteriors(const network::DgpModel& model, network::InferenceState& state) {
    state.prior.resize(model.layers.size());
    state.prior_jitter.resize(model.layers.size());
    bool ok = true;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& lay = model.layers[l];
        const auto factor = numerics::chol_psd(kernel::gram(lay.kernel, lay.z, lay.z));
        Eigen::MatrixXd lambda = numerics::inverse_psd(factor);
        lambda = 0.5 * (lambda + lambda.transpose());
        state.prior[l].eta2 = std::move(lambda);
        state.prior[l].eta1 = Eigen::VectorXd::Zero(lay.n_inducing());
        state.prior_jitter[l] = factor.jitter;
        for (std::size_t j = 0; j < state.g[l].size(); ++j) {
            if (!sep::rebuild_posterior(state.prior[l], state.g[l][j], state.n_train,
                                        state.q[l][j])) {
                ok = false;
            }
        }
    }
    return ok;
}

MinibatchEval compute_minibatch(const network::DgpModel& model,
                                const network::InferenceState& state,
                                const network::NetworkContext& ctx,
                                const network::Beliefs& cavities, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y,
                                const std::vector<Eigen::Index>& rows, long n_total,
                                bool parallel) {
    const Eigen::Index b = static_cast<Eigen::Index>(rows.size());
    std::vector<PointResult> results(static_cast<std::size_t>(b));

    parallel_for(b, parallel, [&](Eigen::Index i) {
        PointResult& res = results[static_cast<std::size_t>(i)];
        const Eigen::VectorXd xi = x.row(rows[static_cast<std::size_t>(i)]).transpose();
        const double yi = y[rows[static_cast<std::size_t>(i)]];
        network::NetworkGrads grads;
        try {
            grads = network::grad_log_z(model, ctx, xi, yi);
            res.flat_grad = network::pack_gradients(model, grads);
            if (!std::isfinite(grads.logz) || !res.flat_grad.allFinite()) {
                throw NonFiniteGradientError("non-finite log Z or gradient");
            }
            res.grad_ok = true;
            res.logz = grads.logz;
            res.cavity = grads.belief;
        } catch (const FactorizationError&) {
            return;
        } catch (const NumericalVarianceError&) {
            return;
        } catch (const NonFiniteGradientError&) {
            return;
        }
        try {
            res.theta_hat.resize(model.layers.size());
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                res.theta_hat[l].resize(state.g[l].size());
                for (std::size_t j = 0; j < state.g[l].size(); ++j) {
                    res.theta_hat[l][j] = sep::site_estimate(
                        cavities[l][j], grads.belief[l][j].d_mean, grads.belief[l][j].d_cov);
                }
            }
            res.sep_ok = true;
        } catch (const MomentMatchError&) {
            res.theta_hat.clear();
        } catch (const FactorizationError&) {
            res.theta_hat.clear();
        }
    });

    MinibatchEval eval;
    eval.hyper_grad = Eigen::VectorXd::Zero(network::parameter_count(model));
    eval.cavity_grad_sum.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Eigen::Index m = model.layers[l].n_inducing();
        eval.cavity_grad_sum[l].assign(
            state.g[l].size(),
            network::CavityGrad{Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, m)});
    }
    double logz_sum = 0.0;
    for (const auto& res : results) {
        if (res.grad_ok) {
            eval.hyper_grad += res.flat_grad;
            logz_sum += res.logz;
            ++eval.grad_ok;
            for (std::size_t l = 0; l < res.cavity.size(); ++l) {
                for (std::size_t j = 0; j < res.cavity[l].size(); ++j) {
                    eval.cavity_grad_sum[l][j].d_mean += res.cavity[l][j].d_mean;
                    eval.cavity_grad_sum[l][j].d_cov += res.cavity[l][j].d_cov;
                }
            }
        }
        if (res.sep_ok) ++eval.sep_ok;
    }
    eval.skips = b - eval.sep_ok;
    eval.hyper_grad *= static_cast<double>(n_total) / static_cast<double>(b);
    eval.mean_logz = eval.grad_ok > 0 ? logz_sum / static_cast<double>(eval.grad_ok) : kNan;

    if (eval.sep_ok > 0) {
        eval.theta_hat_avg.resize(model.layers.size());
        const double inv = 1.0 / static_cast<double>(eval.sep_ok);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            eval.theta_hat_avg[l].resize(state.g[l].size());
            for (std::size_t j = 0; j < state.g[l].size(); ++j) {
                auto& site = eval.theta_hat_avg[l][j];
                site = layer::GaussianSite::zero(model.layers[l].n_inducing());
                for (const auto& res : results) {
                    if (!res.sep_ok) continue;
                    site.eta1 += res.theta_hat[l][j].eta1;
                    site.eta2 += res.theta_hat[l][j].eta2;
                }
                site.eta1 *= inv;
                site.eta2 *= inv;
            }
        }
    }
    return eval;
}

Eigen::VectorXd energy_gradient(const network::DgpModel& model,
                                const network::InferenceState& state,
                                const network::NetworkContext& ctx,
                                const network::Beliefs& cavities,
                                const MinibatchEval& eval, long n_total, double scale) {
    Eigen::VectorXd total = eval.hyper_grad;
    const double n = static_cast<double>(n_total);
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& lay = model.layers[l];
        const Eigen::Index m = lay.n_inducing();
        const Eigen::MatrixXd v_prior =
            ctx.layers[l].kzz.L * ctx.layers[l].kzz.L.transpose();

        Eigen::MatrixXd d_lambda = Eigen::MatrixXd::Zero(m, m);
        for (std::size_t j = 0; j < state.q[l].size(); ++j) {
            const auto& cav = cavities[l][j];
            const auto q_mom = layer::site_to_moments(state.q[l][j]);
            const Eigen::VectorXd gm = scale * eval.cavity_grad_sum[l][j].d_mean;
            const Eigen::MatrixXd gv = scale * eval.cavity_grad_sum[l][j].d_cov;
            // log Z route through the cavity moments: m = Lambda^-1 eta,
            // V = Lambda^-1 with eta fixed.
            d_lambda.noalias() -= cav.cov * gv * cav.cov;
            d_lambda.noalias() -= (cav.cov * gm) * cav.mean.transpose();
            // Log-partition terms of the energy.
            d_lambda.noalias() -= 0.5 * n * (cav.mean * cav.mean.transpose() + cav.cov);
            d_lambda.noalias() +=
                0.5 * (n - 1.0) * (q_mom.mean * q_mom.mean.transpose() + q_mom.cov);
            d_lambda += 0.5 * v_prior;
        }
        const Eigen::MatrixXd d_keff =
            -(state.prior[l].eta2 * d_lambda * state.prior[l].eta2);

        total[at] += ctx.layers[l].jitter() * d_keff.trace();
        const auto gz = kernel::gram_grads(lay.kernel, lay.z, lay.z, d_keff);
        total[at] += gz.d_log_sf2;
        total.segment(at + 1, lay.kernel.dim()) += gz.d_log_lengthscales;
        Eigen::Index z_at = at + 1 + lay.kernel.dim() + 1;  // skip log_noise
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index d = 0; d < lay.z.cols(); ++d) {
                total[z_at++] += gz.d_x(i, d) + gz.d_x2(i, d);
            }
        }
        at = z_at;
    }
    return total;
}

sep::SepCounters sep_sweep(const network::DgpModel& model, network::InferenceState& state,
                           const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const sep::SepConfig& cfg, int minibatch_size) {
    const Eigen::Index n = x.rows();
    const double damping = resolve_damping(cfg, static_cast<long>(n));
    const Eigen::Index step = cfg.update_per_minibatch
                                  ? std::max<Eigen::Index>(1, minibatch_size)
                                  : Eigen::Index{1};
    sep::SepCounters counters;
    for (Eigen::Index start = 0; start < n; start += step) {
        const Eigen::Index stop = std::min(n, start + step);
        std::vector<Eigen::Index> rows;
        rows.reserve(static_cast<std::size_t>(stop - start));
        for (Eigen::Index i = start; i < stop; ++i) rows.push_back(i);

        network::Beliefs cav;
        try {
            cav = sep::cavity_beliefs(state);
        } catch (const CavityNotPdError&) {
            counters.skipped += static_cast<long>(rows.size());
            continue;
        }
        const auto ctx = network::make_context(model, cav);
        const auto eval = compute_minibatch(model, state, ctx, cav, x, y, rows,
                                            static_cast<long>(n),
                                            cfg.parallel_within_minibatch);
        counters.skipped += eval.skips;
        if (eval.sep_ok > 0) {
            const double eta = std::min(1.0, damping * static_cast<double>(eval.sep_ok));
            apply_factor_update(state, eval.theta_hat_avg, eta, counters);
        }
    }
    return counters;
}

TrainResult train(const Eigen::MatrixXd& x_raw, const Eigen::VectorXd& y_raw,
                  const TrainConfig& cfg) {
    if (cfg.minibatch_size < 1) throw DimensionError("train: minibatch_size must be >= 1");
    if (cfg.iterations < 1) throw DimensionError("train: iterations must be >= 1");
    if (!(cfg.learning_rate >= 0.0)) throw DimensionError("train: learning_rate must be >= 0");
    if (x_raw.rows() != y_raw.size()) throw DimensionError("train: X/y row mismatch");

    const Eigen::Index n = x_raw.rows();
    const auto standardizer = data::fit_standardizer(x_raw, y_raw);
    const Eigen::MatrixXd xs = standardizer.apply_x(x_raw);
    const Eigen::VectorXd ys = standardizer.apply_y(y_raw);

    InitResult init = init_model(xs, ys, cfg.architecture, cfg.seed);
    network::DgpModel model = std::move(init.model);
    network::InferenceState state = std::move(init.state);
    model.standardization = standardizer;

    const double damping = resolve_damping(cfg.sep, static_cast<long>(n));
    const Eigen::Index b = std::min<Eigen::Index>(cfg.minibatch_size, n);

    Eigen::VectorXd theta = network::pack_parameters(model);
    AdamState adam = AdamState::zeros(theta.size());

    rng::Rng shuffle_rng(cfg.seed + 1);
    std::vector<std::size_t> order = shuffle_rng.permutation(static_cast<std::size_t>(n));
    std::size_t cursor = 0;
    const auto draw_batch = [&]() {
        std::vector<Eigen::Index> rows;
        rows.reserve(static_cast<std::size_t>(b));
        while (rows.size() < static_cast<std::size_t>(b)) {
            if (cursor == order.size()) {
                order = shuffle_rng.permutation(static_cast<std::size_t>(n));
                cursor = 0;
            }
            rows.push_back(static_cast<Eigen::Index>(order[cursor++]));
        }
        return rows;
    };

    TrainResult result;
    result.history.reserve(static_cast<std::size_t>(cfg.iterations));

    for (long iter = 0; iter < cfg.iterations; ++iter) {
        const auto rows = draw_batch();
        IterationRecord record;
        record.iter = iter;

        Eigen::VectorXd hyper_grad;
        long grad_ok = 0;

        if (cfg.sep.update_per_minibatch) {
            network::Beliefs cav;
            try {
                cav = sep::cavity_beliefs(state);
            } catch (const CavityNotPdError&) {
                record.mean_logz = kNan;
                record.skips = static_cast<long>(rows.size());
                result.counters.skipped += record.skips;
                result.history.push_back(record);
                continue;
            }
            const auto ctx = network::make_context(model, cav);
            record.jitter_events = ctx.jitter_events();
            const auto eval = compute_minibatch(model, state, ctx, cav, xs, ys, rows,
                                                static_cast<long>(n),
                                                cfg.sep.parallel_within_minibatch);
            record.mean_logz = eval.mean_logz;
            record.skips = eval.skips;
            result.counters.skipped += eval.skips;
            if (eval.grad_ok > 0) {
                hyper_grad = energy_gradient(model, state, ctx, cav, eval,
                                             static_cast<long>(n),
                                             static_cast<double>(n) /
                                                 static_cast<double>(rows.size()));
            }
            if (eval.sep_ok > 0) {
                const double eta = std::min(1.0, damping * static_cast<double>(eval.sep_ok));
                apply_factor_update(state, eval.theta_hat_avg, eta, result.counters);
            }
            grad_ok = eval.grad_ok;
        } else {
            hyper_grad = Eigen::VectorXd::Zero(theta.size());
            double logz_sum = 0.0;
            for (const Eigen::Index row : rows) {
                network::Beliefs cav;
                try {
                    cav = sep::cavity_beliefs(state);
                } catch (const CavityNotPdError&) {
                    ++record.skips;
                    ++result.counters.skipped;
                    continue;
                }
                const auto ctx = network::make_context(model, cav);
                record.jitter_events += ctx.jitter_events();
                const auto eval =
                    compute_minibatch(model, state, ctx, cav, xs, ys, {row},
                                      static_cast<long>(n), false);
                record.skips += eval.skips;
                result.counters.skipped += eval.skips;
                if (eval.grad_ok > 0) {
                    hyper_grad += energy_gradient(model, state, ctx, cav, eval,
                                                  static_cast<long>(n),
                                                  static_cast<double>(n));
                    logz_sum += eval.mean_logz;
                    ++grad_ok;
                }
                if (eval.sep_ok > 0) {
                    apply_factor_update(state, eval.theta_hat_avg, std::min(1.0, damping),
                                        result.counters);
                }
            }
            hyper_grad /= static_cast<double>(rows.size());
            record.mean_logz = grad_ok > 0 ? logz_sum / static_cast<double>(grad_ok) : kNan;
        }

        if (grad_ok > 0) {
            const Eigen::VectorXd theta_old = theta;
            const AdamState adam_old = adam;
            try {
                const Eigen::VectorXd theta_new = adam_step(theta, hyper_grad, adam, cfg);
                network::unpack_parameters(theta_new, model);
                if (refresh_posteriors(model, state)) {
                    theta = theta_new;
                } else {
                    // Roll the step back: the new prior made some posterior
                    // indefinite. Counted, never silently absorbed.
                    network::unpack_parameters(theta_old, model);
                    refresh_posteriors(model, state);
                    adam = adam_old;
                    ++result.counters.reverted;
                }
            } catch (const NonFiniteGradientError&) {
                ++result.counters.reverted;
            } catch (const FactorizationError&) {
                network::unpack_parameters(theta_old, model);
                refresh_posteriors(model, state);
                adam = adam_old;
                ++result.counters.reverted;
            }
        }
        result.history.push_back(record);
    }

    result.model = std::move(model);
    result.state = std::move(state);
    return result;
}

}  // namespace sepdgp::trainer
