#include "sepdgp/oracle.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace sepdgp::oracle {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Naive RBF-ARD evaluation written out from the definition.
double naive_kernel(double sf2, const Eigen::VectorXd& lengthscales, const Eigen::VectorXd& a,
                    const Eigen::VectorXd& b) {
    double quad = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
        const double diff = (a[d] - b[d]) / lengthscales[d];
        quad += diff * diff;
    }
    return sf2 * std::exp(-0.5 * quad);
}

// Variance accumulation shifted by the first sample: constant streams give a
// standard error of exactly zero instead of cancellation dust.
struct ShiftedMoments {
    double shift = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    bool started = false;

    void add(double v) {
        if (!started) {
            shift = v;
            started = true;
        }
        const double d = v - shift;
        s1 += d;
        s2 += d * d;
    }

    McEstimate estimate(long n, std::uint64_t seed) const {
        McEstimate e;
        e.n_samples = n;
        e.seed = seed;
        e.value = shift + s1 / static_cast<double>(n);
        const double var = std::max(
            0.0, (s2 - s1 * s1 / static_cast<double>(n)) / static_cast<double>(n - 1));
        e.standard_error = std::sqrt(var / static_cast<double>(n));
        return e;
    }
};

Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error(std::string("oracle: Cholesky failed for ") + what);
    }
    return llt.matrixL();
}

}  // namespace

McPsi mc_psi(const kernel::KernelParams& p, const Eigen::MatrixXd& z,
             const kernel::MomentBelief& q, long n_samples, std::uint64_t seed) {
    if (n_samples < 2) throw std::invalid_argument("mc_psi: need at least 2 samples");
    const Eigen::Index m = z.rows();
    const Eigen::Index d = z.cols();
    const double sf2 = std::exp(p.log_sf2);
    const Eigen::VectorXd ls = p.log_lengthscales.array().exp();
    const Eigen::VectorXd sd = q.variance.array().sqrt();

    rng::Rng r(seed);
    ShiftedMoments psi0_acc;
    std::vector<ShiftedMoments> psi1_acc(static_cast<std::size_t>(m));
    std::vector<ShiftedMoments> psi2_acc(static_cast<std::size_t>(m * m));

    Eigen::VectorXd h(d), k(m);
    for (long s = 0; s < n_samples; ++s) {
        for (Eigen::Index i = 0; i < d; ++i) h[i] = q.mean[i] + sd[i] * r.normal();
        psi0_acc.add(naive_kernel(sf2, ls, h, h));
        for (Eigen::Index i = 0; i < m; ++i) k[i] = naive_kernel(sf2, ls, h, z.row(i).transpose());
        for (Eigen::Index i = 0; i < m; ++i) {
            psi1_acc[static_cast<std::size_t>(i)].add(k[i]);
            for (Eigen::Index j = 0; j < m; ++j) {
                psi2_acc[static_cast<std::size_t>(i * m + j)].add(k[i] * k[j]);
            }
        }
    }

    McPsi out;
    out.psi0 = psi0_acc.estimate(n_samples, seed);
    out.psi1.resize(static_cast<std::size_t>(m));
    out.psi2.assign(static_cast<std::size_t>(m), std::vector<McEstimate>(static_cast<std::size_t>(m)));
    for (Eigen::Index i = 0; i < m; ++i) {
        out.psi1[static_cast<std::size_t>(i)] =
            psi1_acc[static_cast<std::size_t>(i)].estimate(n_samples, seed);
        for (Eigen::Index j = 0; j < m; ++j) {
            out.psi2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                psi2_acc[static_cast<std::size_t>(i * m + j)].estimate(n_samples, seed);
        }
    }
    return out;
}

McEstimate mc_log_z(const network::DgpModel& model, const network::Beliefs& cavities,
                    const Eigen::VectorXd& x, double y, long n_samples, std::uint64_t seed,
                    const std::vector<double>& layer_jitter) {
    const std::size_t n_layers = model.layers.size();
    if (n_layers < 1 || n_layers > 2) {
        throw std::invalid_argument("mc_log_z: only 1 or 2 layers supported");
    }
    if (n_samples < 2) throw std::invalid_argument("mc_log_z: need at least 2 samples");

    struct LayerAux {
        double sf2 = 0.0;
        Eigen::VectorXd ls;
        double noise = 0.0;
        Eigen::LLT<Eigen::MatrixXd> kzz_llt;
        std::vector<Eigen::VectorXd> cav_mean;
        std::vector<Eigen::MatrixXd> cav_chol;
    };
    std::vector<LayerAux> aux(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& lay = model.layers[l];
        auto& a = aux[l];
        a.sf2 = std::exp(lay.kernel.log_sf2);
        a.ls = lay.kernel.log_lengthscales.array().exp();
        a.noise = std::exp(lay.log_noise);
        const Eigen::Index m = lay.n_inducing();
        Eigen::MatrixXd kzz(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                kzz(i, j) = naive_kernel(a.sf2, a.ls, lay.z.row(i).transpose(),
                                         lay.z.row(j).transpose());
        if (l < layer_jitter.size()) kzz.diagonal().array() += layer_jitter[l];
        a.kzz_llt.compute(kzz);
        if (a.kzz_llt.info() != Eigen::Success) {
            throw std::runtime_error("mc_log_z: kernel matrix not PD");
        }
        for (const auto& cav : cavities[l]) {
            a.cav_mean.push_back(cav.mean);
            a.cav_chol.push_back(chol_lower(cav.cov, "cavity covariance"));
        }
    }

    const auto conditional = [](const LayerAux& a, const layer::SparseGpLayer& lay,
                                const Eigen::VectorXd& input, Eigen::VectorXd& c_out) {
        const Eigen::Index m = lay.n_inducing();
        Eigen::VectorXd kxz(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            kxz[i] = naive_kernel(a.sf2, a.ls, input, lay.z.row(i).transpose());
        }
        c_out = a.kzz_llt.solve(kxz);
        const double r_var = a.noise + a.sf2 - kxz.dot(c_out);
        return r_var;
    };

    rng::Rng r(seed);
    ShiftedMoments acc;

    // Layer-1 conditional weights are fixed because x is fixed.
    Eigen::VectorXd c1;
    const double r1 = conditional(aux[0], model.layers[0], x, c1);

    const int dims1 = model.layers[0].output_dim;
    Eigen::VectorXd h1(dims1);
    for (long s = 0; s < n_samples; ++s) {
        double mean_y = 0.0;
        double var_y = 0.0;
        if (n_layers == 1) {
            const auto& a = aux[0];
            const Eigen::VectorXd u =
                a.cav_mean[0] + a.cav_chol[0] * r.normal_vector(a.cav_mean[0].size());
            mean_y = c1.dot(u);
            var_y = r1;
        } else {
            for (int j = 0; j < dims1; ++j) {
                const auto& a = aux[0];
                const Eigen::VectorXd u =
                    a.cav_mean[static_cast<std::size_t>(j)] +
                    a.cav_chol[static_cast<std::size_t>(j)] *
                        r.normal_vector(a.cav_mean[static_cast<std::size_t>(j)].size());
                h1[j] = c1.dot(u) + std::sqrt(r1) * r.normal();
            }
            Eigen::VectorXd c2;
            const double r2 = conditional(aux[1], model.layers[1], h1, c2);
            const auto& a = aux[1];
            const Eigen::VectorXd u2 =
                a.cav_mean[0] + a.cav_chol[0] * r.normal_vector(a.cav_mean[0].size());
            mean_y = c2.dot(u2);
            var_y = r2;
        }
        const double resid = y - mean_y;
        acc.add(std::exp(-0.5 * (kLog2Pi + std::log(var_y)) - 0.5 * resid * resid / var_y));
    }

    McEstimate raw = acc.estimate(n_samples, seed);
    if (!(raw.value > 0.0)) {
        throw McUnderflowError("mc_log_z: sample mean of densities underflowed to zero");
    }
    McEstimate e;
    e.n_samples = n_samples;
    e.seed = seed;
    e.value = std::log(raw.value);
    e.standard_error = raw.standard_error / raw.value;  // delta method
    return e;
}

Eigen::VectorXd fd_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& at, double step) {
    Eigen::VectorXd grad(at.size());
    Eigen::VectorXd probe = at;
    for (Eigen::Index i = 0; i < at.size(); ++i) {
        probe[i] = at[i] + step;
        const double hi = f(probe);
        probe[i] = at[i] - step;
        const double lo = f(probe);
        probe[i] = at[i];
        if (!std::isfinite(hi) || !std::isfinite(lo)) {
            throw NonFiniteGradientError("fd_grad: non-finite evaluation");
        }
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

}  // namespace sepdgp::oracle
