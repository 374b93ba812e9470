#include "sepdgp/verify.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "sepdgp/oracle.hpp"
#include "sepdgp/sep.hpp"

namespace sepdgp::verify {

namespace {

using layer::BeliefMoments;
using layer::SparseGpLayer;
using network::Beliefs;
using network::DgpModel;

double naive_kernel(double sf2, const Eigen::VectorXd& ls, const Eigen::VectorXd& a,
                    const Eigen::VectorXd& b) {
    double quad = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
        const double diff = (a[d] - b[d]) / ls[d];
        quad += diff * diff;
    }
    return sf2 * std::exp(-0.5 * quad);
}

Eigen::MatrixXd random_pd(rng::Rng& r, Eigen::Index m, double spread, double ridge) {
    const Eigen::MatrixXd b = spread * r.normal_matrix(m, m);
    return (b * b.transpose()) / static_cast<double>(m) +
           ridge * Eigen::MatrixXd::Identity(m, m);
}

// Keeps randomized kernel matrices well conditioned by enforcing a minimum
// pairwise separation between inducing inputs.
Eigen::MatrixXd separated_inputs(rng::Rng& r, Eigen::Index n, Eigen::Index d, double spread,
                                 double min_dist = 0.6) {
    if (d == 1) spread = std::max(spread, 0.45 * static_cast<double>(n));
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            for (Eigen::Index j = 0; j < d; ++j) x(i, j) = r.uniform(-spread, spread);
            bool ok = true;
            for (Eigen::Index k = 0; k < i; ++k) {
                if ((x.row(i) - x.row(k)).norm() < min_dist) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
        }
    }
    return x;
}

// Inducing inputs are placed in lengthscale units so the kernel matrix stays
// comparably conditioned whatever lengthscales are drawn.
SparseGpLayer random_layer(rng::Rng& r, int in_dim, int out_dim, int m, double z_spread,
                           double log_l_lo, double log_l_hi, double noise_lo,
                           double noise_hi) {
    SparseGpLayer lay;
    lay.input_dim = in_dim;
    lay.output_dim = out_dim;
    lay.kernel.log_sf2 = r.uniform(-0.4, 0.4);
    lay.kernel.log_lengthscales.resize(in_dim);
    for (int d = 0; d < in_dim; ++d) lay.kernel.log_lengthscales[d] = r.uniform(log_l_lo, log_l_hi);
    lay.log_noise = std::log(r.uniform(noise_lo, noise_hi));
    lay.z = separated_inputs(r, m, in_dim, z_spread);
    for (int d = 0; d < in_dim; ++d) {
        lay.z.col(d) *= std::exp(lay.kernel.log_lengthscales[d]);
    }
    return lay;
}

std::vector<BeliefMoments> random_beliefs(rng::Rng& r, int dims, Eigen::Index m,
                                          double mean_scale, double cov_spread,
                                          double cov_ridge) {
    std::vector<BeliefMoments> out;
    out.reserve(static_cast<std::size_t>(dims));
    for (int j = 0; j < dims; ++j) {
        BeliefMoments bel;
        bel.mean = mean_scale * r.normal_vector(m);
        bel.cov = random_pd(r, m, cov_spread, cov_ridge);
        out.push_back(std::move(bel));
    }
    return out;
}

struct TwoLayerCase {
    DgpModel model;
    Beliefs beliefs;
    Eigen::VectorXd x;
    double y = 0.0;
};

/// near_identity switches the second layer into the long-lengthscale regime
/// the projection is near-exact in.
TwoLayerCase random_two_layer(rng::Rng& r, bool near_identity) {
    TwoLayerCase c;
    const int d_in = 1 + static_cast<int>(r.raw() % 2);
    const int hidden = 1 + static_cast<int>(r.raw() % 2);
    const int m1 = 3 + 2 * static_cast<int>(r.raw() % 2);
    const int m2 = 3 + 2 * static_cast<int>(r.raw() % 2);

    c.model.input_dim = d_in;
    c.model.layers.push_back(random_layer(r, d_in, hidden, m1, 2.0, -0.2, 0.4, 0.05, 0.2));
    c.beliefs.push_back(random_beliefs(r, hidden, m1, 0.7, 0.4, 0.2));
    c.x.resize(d_in);
    for (int d = 0; d < d_in; ++d) c.x[d] = r.uniform(-1.5, 1.5);

    if (near_identity) {
        // Size the second-layer lengthscales off the actual hidden spread so
        // the layer is firmly inside its linear regime (>= 10x the spread).
        const auto ctx1 =
            layer::make_context(c.model.layers[0], c.beliefs[0]);
        const auto h1 = layer::propagate_point(c.model.layers[0], ctx1, c.x);
        SparseGpLayer second;
        second.input_dim = hidden;
        second.output_dim = 1;
        second.kernel.log_sf2 = r.uniform(-0.4, 0.4);
        second.kernel.log_lengthscales.resize(hidden);
        for (int d = 0; d < hidden; ++d) {
            const double spread =
                std::abs(h1.out.mean[d]) + 3.0 * std::sqrt(h1.out.variance[d]);
            second.kernel.log_lengthscales[d] = std::log(10.0 * std::max(2.5, spread));
        }
        second.log_noise = std::log(r.uniform(0.05, 0.3));
        second.z = separated_inputs(r, m2, hidden, 1.5);
        for (int d = 0; d < hidden; ++d) {
            second.z.col(d) *= std::exp(second.kernel.log_lengthscales[d]);
        }
        c.model.layers.push_back(std::move(second));
    } else {
        c.model.layers.push_back(random_layer(r, hidden, 1, m2, 1.5, 0.4, 1.1, 0.05, 0.3));
    }
    c.beliefs.push_back(random_beliefs(r, 1, m2, 0.7, 0.4, 0.2));

    const auto ctx = network::make_context(c.model, c.beliefs);
    const auto out = network::forward_moments(c.model, ctx, c.x);
    c.y = out.mean[0] + r.uniform(-1.5, 1.5) * std::sqrt(out.variance[0]);
    return c;
}

long mc_samples(const Options& opt, long full) { return opt.quick ? full / 100 : full; }

CheckResult make_check(std::string suite, std::string name, double value, double bound) {
    CheckResult c;
    c.suite = std::move(suite);
    c.name = std::move(name);
    c.value = value;
    c.bound = bound;
    c.pass = value <= bound && std::isfinite(value);
    return c;
}

}  // namespace

std::vector<CheckResult> psi_mc_suite(const Options& opt) {
    std::vector<CheckResult> results;
    const int dims_cycle[3] = {1, 2, 5};
    const int m_cycle[3] = {1, 3, 10};
    const long n = mc_samples(opt, 1000000);
    // Quick mode trades samples for time; the skewed psi2 summands make the
    // small-sample SE estimate optimistic, so the band widens accordingly.
    const double band = opt.quick ? 5.0 : 3.0;

    for (int cfg = 0; cfg < 20; ++cfg) {
        rng::Rng r(opt.seed * 1009 + static_cast<std::uint64_t>(cfg));
        const int d = dims_cycle[cfg % 3];
        const int m = m_cycle[(cfg / 3) % 3];

        kernel::KernelParams p;
        p.log_sf2 = r.uniform(-0.7, 0.7);
        p.log_lengthscales.resize(d);
        for (int i = 0; i < d; ++i) p.log_lengthscales[i] = r.uniform(-0.5, 0.5);
        Eigen::MatrixXd z(m, d);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j) z(i, j) = r.uniform(-2.0, 2.0);
        kernel::MomentBelief q;
        q.mean.resize(d);
        q.variance.resize(d);
        for (int i = 0; i < d; ++i) {
            q.mean[i] = r.uniform(-1.5, 1.5);
            q.variance[i] = r.uniform(0.01, 1.0);
        }

        const std::string tag = "config " + std::to_string(cfg);
        results.push_back(make_check("psi-mc", tag + " psi0 exact",
                                     std::abs(kernel::psi0(p, q) - std::exp(p.log_sf2)), 0.0));

        const Eigen::VectorXd a1 =
            kernel::psi1(p, z, q).array() + opt.psi1_bias;
        const Eigen::MatrixXd a2 = kernel::psi2(p, z, q);
        const auto mc = oracle::mc_psi(p, z, q, n, opt.seed * 7919 + static_cast<std::uint64_t>(cfg));

        double z1_max = 0.0;
        for (int i = 0; i < m; ++i) {
            const auto& e = mc.psi1[static_cast<std::size_t>(i)];
            const double se = std::max(e.standard_error, 1e-300);
            z1_max = std::max(z1_max, std::abs(a1[i] - e.value) / se);
        }
        results.push_back(make_check("psi-mc", tag + " psi1 max|z|", z1_max, band));

        double z2_max = 0.0;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                const auto& e = mc.psi2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                const double se = std::max(e.standard_error, 1e-300);
                z2_max = std::max(z2_max, std::abs(a2(i, j) - e.value) / se);
            }
        }
        results.push_back(make_check("psi-mc", tag + " psi2 max|z|", z2_max, band));
    }
    return results;
}

std::vector<CheckResult> logz_mc_suite(const Options& opt) {
    std::vector<CheckResult> results;
    const long n = mc_samples(opt, 1000000);
    const double band = opt.quick ? 5.0 : 3.0;
    for (int cfg = 0; cfg < 10; ++cfg) {
        rng::Rng r(opt.seed * 2003 + static_cast<std::uint64_t>(cfg));
        const TwoLayerCase c = random_two_layer(r, true);
        const auto ctx = network::make_context(c.model, c.beliefs);
        const double analytic = network::log_z(c.model, ctx, c.x, c.y);
        std::vector<double> jitters;
        for (const auto& l : ctx.layers) jitters.push_back(l.jitter());
        const auto mc = oracle::mc_log_z(c.model, c.beliefs, c.x, c.y, n,
                                         opt.seed * 6151 + static_cast<std::uint64_t>(cfg),
                                         jitters);
        const double z = std::abs(analytic - mc.value) / std::max(mc.standard_error, 1e-300);
        results.push_back(
            make_check("logz-mc", "config " + std::to_string(cfg) + " |z|", z, band));
    }
    return results;
}

std::vector<CheckResult> grad_fd_suite(const Options& opt) {
    std::vector<CheckResult> results;
    for (int cfg = 0; cfg < 10; ++cfg) {
        rng::Rng r(opt.seed * 3001 + static_cast<std::uint64_t>(cfg));
        TwoLayerCase c = random_two_layer(r, false);
        const auto ctx = network::make_context(c.model, c.beliefs);
        const auto grads = network::grad_log_z(c.model, ctx, c.x, c.y);

        const double step = 1e-5;
        double worst = 0.0;
        const auto check_coord = [&](double analytic, double fd) {
            const double denom = std::max(std::abs(analytic), std::abs(fd));
            const double ratio = std::abs(analytic) < 1e-6
                                     ? std::abs(analytic - fd) / 1e-8
                                     : std::abs(analytic - fd) / (1e-4 * denom);
            worst = std::max(worst, ratio);
        };

        // Hyperparameters and inducing inputs through the packed vector.
        {
            const Eigen::VectorXd theta0 = network::pack_parameters(c.model);
            const auto f = [&](const Eigen::VectorXd& theta) {
                DgpModel perturbed = c.model;
                network::unpack_parameters(theta, perturbed);
                const auto pctx = network::make_context(perturbed, c.beliefs);
                return network::log_z(perturbed, pctx, c.x, c.y);
            };
            const Eigen::VectorXd fd = oracle::fd_grad(f, theta0, step);
            const Eigen::VectorXd flat = network::pack_gradients(c.model, grads);
            for (Eigen::Index i = 0; i < fd.size(); ++i) check_coord(flat[i], fd[i]);
        }

        // Cavity means and covariances; covariance entries are perturbed
        // symmetrically, so the finite difference sees G_ij + G_ji.
        for (std::size_t l = 0; l < c.model.layers.size(); ++l) {
            for (std::size_t j = 0; j < c.beliefs[l].size(); ++j) {
                const Eigen::Index m = c.beliefs[l][j].mean.size();
                for (Eigen::Index i = 0; i < m; ++i) {
                    Beliefs bp = c.beliefs;
                    bp[l][j].mean[i] += step;
                    Beliefs bm = c.beliefs;
                    bm[l][j].mean[i] -= step;
                    const double hi =
                        network::log_z(c.model, network::make_context(c.model, bp), c.x, c.y);
                    const double lo =
                        network::log_z(c.model, network::make_context(c.model, bm), c.x, c.y);
                    check_coord(grads.belief[l][j].d_mean[i], (hi - lo) / (2.0 * step));
                }
                for (Eigen::Index a = 0; a < m; ++a) {
                    for (Eigen::Index b = a; b < m; ++b) {
                        Beliefs bp = c.beliefs;
                        Beliefs bm = c.beliefs;
                        bp[l][j].cov(a, b) += step;
                        bm[l][j].cov(a, b) -= step;
                        if (a != b) {
                            bp[l][j].cov(b, a) += step;
                            bm[l][j].cov(b, a) -= step;
                        }
                        const double hi = network::log_z(
                            c.model, network::make_context(c.model, bp), c.x, c.y);
                        const double lo = network::log_z(
                            c.model, network::make_context(c.model, bm), c.x, c.y);
                        const double analytic =
                            a == b ? grads.belief[l][j].d_cov(a, a)
                                   : grads.belief[l][j].d_cov(a, b) + grads.belief[l][j].d_cov(b, a);
                        check_coord(analytic, (hi - lo) / (2.0 * step));
                    }
                }
            }
        }
        results.push_back(make_check("grad-fd",
                                     "config " + std::to_string(cfg) + " max violation", worst,
                                     1.0));
    }
    return results;
}

std::vector<CheckResult> sep_conjugate_suite(const Options& opt) {
    std::vector<CheckResult> results;

    // Scalar textbook case: cavity N(0,1), likelihood N(1; u, 1).
    {
        BeliefMoments cav;
        cav.mean = Eigen::VectorXd::Zero(1);
        cav.cov = Eigen::MatrixXd::Identity(1, 1);
        Eigen::VectorXd dm(1);
        dm[0] = 0.5;
        Eigen::MatrixXd dv(1, 1);
        dv(0, 0) = -0.125;
        const auto mm = sep::moment_match(cav, dm, dv);
        const double err =
            std::max(std::abs(mm.mean[0] - 0.5), std::abs(mm.cov(0, 0) - 0.5));
        results.push_back(make_check("sep-conjugate", "scalar exact case", err, 1e-12));
    }

    double worst = 0.0;
    for (int cfg = 0; cfg < 100; ++cfg) {
        rng::Rng r(opt.seed * 4001 + static_cast<std::uint64_t>(cfg));
        const Eigen::Index m = (cfg % 2 == 0) ? 1 : 5;
        BeliefMoments cav;
        cav.mean = 0.8 * r.normal_vector(m);
        cav.cov = random_pd(r, m, 0.6, 0.3);
        const Eigen::VectorXd a = r.normal_vector(m);
        const double lik_var = r.uniform(0.3, 2.0);
        const double y = a.dot(cav.mean) +
                         r.normal() * std::sqrt(a.dot(cav.cov * a) + lik_var);

        const double s = a.dot(cav.cov * a) + lik_var;
        const double resid = y - a.dot(cav.mean);
        const Eigen::VectorXd dm = a * (resid / s);
        const Eigen::MatrixXd dv =
            (a * a.transpose()) * (-0.5 / s + 0.5 * resid * resid / (s * s));
        const auto mm = sep::moment_match(cav, dm, dv);

        // Exact Gaussian conditioning through the information form.
        const Eigen::MatrixXd cav_prec = cav.cov.inverse();
        const Eigen::MatrixXd post_prec = cav_prec + (a * a.transpose()) / lik_var;
        const Eigen::MatrixXd post_cov = post_prec.inverse();
        const Eigen::VectorXd post_mean = post_cov * (cav_prec * cav.mean + a * (y / lik_var));

        worst = std::max(worst, (mm.mean - post_mean).cwiseAbs().maxCoeff());
        worst = std::max(worst, (mm.cov - post_cov).cwiseAbs().maxCoeff());
    }
    results.push_back(make_check("sep-conjugate", "100 random conjugate cases", worst, 1e-10));
    return results;
}

std::vector<CheckResult> collapse_suite(const Options& opt) {
    const int dims_cycle[3] = {1, 2, 5};
    const int m_cycle[3] = {1, 3, 10};
    double worst = 0.0;
    for (int cfg = 0; cfg < 100; ++cfg) {
        rng::Rng r(opt.seed * 5003 + static_cast<std::uint64_t>(cfg));
        const int d = dims_cycle[cfg % 3];
        const int m = m_cycle[(cfg / 3) % 3];

        DgpModel model;
        model.input_dim = d;
        model.layers.push_back(random_layer(r, d, 1, m, 2.0, -0.3, 0.5, 0.05, 0.5));
        Beliefs beliefs;
        beliefs.push_back(random_beliefs(r, 1, m, 0.7, 0.5, 0.3));

        Eigen::VectorXd x(d);
        for (int i = 0; i < d; ++i) x[i] = r.uniform(-2.0, 2.0);

        const auto ctx = network::make_context(model, beliefs);

        // Direct Gaussian marginal of the single-layer model, computed from
        // scratch with a naive kernel and a dense inverse.
        const auto& lay = model.layers[0];
        const double sf2 = std::exp(lay.kernel.log_sf2);
        const Eigen::VectorXd ls = lay.kernel.log_lengthscales.array().exp();
        Eigen::MatrixXd kzz(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                kzz(i, j) = naive_kernel(sf2, ls, lay.z.row(i).transpose(),
                                         lay.z.row(j).transpose());
        kzz.diagonal().array() += ctx.layers[0].jitter();
        Eigen::VectorXd kxz(m);
        for (int i = 0; i < m; ++i) kxz[i] = naive_kernel(sf2, ls, x, lay.z.row(i).transpose());
        const Eigen::VectorXd c = kzz.inverse() * kxz;
        const double mean = c.dot(beliefs[0][0].mean);
        const double var = std::exp(lay.log_noise) + sf2 - kxz.dot(c) +
                           c.dot(beliefs[0][0].cov * c);
        const double y = mean + r.normal() * std::sqrt(var);
        const double direct =
            -0.5 * std::log(2.0 * M_PI * var) - 0.5 * (y - mean) * (y - mean) / var;

        const double analytic = network::log_z(model, ctx, x, y);
        worst = std::max(worst, std::abs(analytic - direct));
    }
    std::vector<CheckResult> results;
    results.push_back(make_check("l1-collapse", "100 configs max |analytic - direct|", worst, 1e-9));
    return results;
}

std::vector<CheckResult> run_all(const Options& opt) {
    std::vector<CheckResult> all;
    for (auto&& suite : {psi_mc_suite(opt), logz_mc_suite(opt), grad_fd_suite(opt),
                         sep_conjugate_suite(opt), collapse_suite(opt)}) {
        all.insert(all.end(), suite.begin(), suite.end());
    }
    return all;
}

bool all_pass(const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        if (!r.pass) return false;
    }
    return true;
}

}  // namespace sepdgp::verify
