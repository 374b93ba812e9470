#include "sepdgp/kernel.hpp"

#include <cmath>

namespace sepdgp::kernel {

namespace {

void check_dims(const KernelParams& p, Eigen::Index d, const char* where) {
    if (p.dim() != d) {
        throw DimensionError(std::string(where) + ": kernel dimension mismatch");
    }
}

void check_belief(const MomentBelief& q, const char* where) {
    if (q.mean.size() != q.variance.size()) {
        throw DimensionError(std::string(where) + ": belief mean/variance length mismatch");
    }
    if ((q.variance.array() < 0.0).any()) {
        throw DimensionError(std::string(where) + ": belief variance has a negative entry");
    }
}

}  // namespace

double kernel_eval(const KernelParams& p, const Eigen::VectorXd& x, const Eigen::VectorXd& x2) {
    check_dims(p, x.size(), "kernel_eval");
    if (x.size() != x2.size()) throw DimensionError("kernel_eval: input dimension mismatch");
    const Eigen::ArrayXd inv_l2 = (-2.0 * p.log_lengthscales.array()).exp();
    const double quad = ((x - x2).array().square() * inv_l2).sum();
    return p.sf2() * std::exp(-0.5 * quad);
}

Eigen::MatrixXd gram(const KernelParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& x2) {
    check_dims(p, x.cols(), "gram");
    if (x.cols() != x2.cols()) throw DimensionError("gram: column count mismatch");
    const Eigen::ArrayXd inv_l2 = (-2.0 * p.log_lengthscales.array()).exp();
    const double sf2 = p.sf2();
    Eigen::MatrixXd k(x.rows(), x2.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x2.rows(); ++j) {
            const double quad =
                ((x.row(i) - x2.row(j)).transpose().array().square() * inv_l2).sum();
            k(i, j) = sf2 * std::exp(-0.5 * quad);
        }
    }
    return k;
}

double psi0(const KernelParams& p, const MomentBelief& q) {
    check_belief(q, "psi0");
    check_dims(p, q.dim(), "psi0");
    return p.sf2();
}

Eigen::VectorXd psi1(const KernelParams& p, const Eigen::MatrixXd& z, const MomentBelief& q) {
    check_belief(q, "psi1");
    check_dims(p, q.dim(), "psi1");
    if (z.cols() != q.dim()) throw DimensionError("psi1: Z column count mismatch");
    const Eigen::ArrayXd l2 = p.lengthscales2();
    const Eigen::ArrayXd a = l2 + q.variance.array();          // l^2 + v
    const double log_sf2 = p.log_sf2;
    const Eigen::ArrayXd half_log_ratio = 0.5 * (l2 / a).log();
    Eigen::VectorXd out(z.rows());
    for (Eigen::Index m = 0; m < z.rows(); ++m) {
        const Eigen::ArrayXd delta = q.mean.array() - z.row(m).transpose().array();
        const double log_val =
            log_sf2 + (half_log_ratio - 0.5 * delta.square() / a).sum();
        out[m] = std::exp(log_val);
    }
    return out;
}

Eigen::MatrixXd psi2(const KernelParams& p, const Eigen::MatrixXd& z, const MomentBelief& q) {
    check_belief(q, "psi2");
    check_dims(p, q.dim(), "psi2");
    if (z.cols() != q.dim()) throw DimensionError("psi2: Z column count mismatch");
    const Eigen::ArrayXd l2 = p.lengthscales2();
    const Eigen::ArrayXd b = l2 + 2.0 * q.variance.array();    // l^2 + 2v
    const Eigen::ArrayXd half_log_ratio = 0.5 * (l2 / b).log();
    const double base = 2.0 * p.log_sf2 + half_log_ratio.sum();
    const Eigen::ArrayXd mu = q.mean.array();
    Eigen::MatrixXd out(z.rows(), z.rows());
    for (Eigen::Index m = 0; m < z.rows(); ++m) {
        for (Eigen::Index mp = m; mp < z.rows(); ++mp) {
            const Eigen::ArrayXd zm = z.row(m).transpose().array();
            const Eigen::ArrayXd zp = z.row(mp).transpose().array();
            const Eigen::ArrayXd diff = zm - zp;
            const Eigen::ArrayXd mid = 0.5 * (zm + zp);
            const double log_val = base - (diff.square() / (4.0 * l2)).sum() -
                                   ((mu - mid).square() / b).sum();
            out(m, mp) = std::exp(log_val);
            out(mp, m) = out(m, mp);
        }
    }
    return out;
}

PsiGrads psi_grads(const KernelParams& p, const Eigen::MatrixXd& z, const MomentBelief& q,
                   double w0, const Eigen::VectorXd& w1, const Eigen::MatrixXd& w2) {
    check_belief(q, "psi_grads");
    check_dims(p, q.dim(), "psi_grads");
    const Eigen::Index m_count = z.rows();
    const Eigen::Index d_count = z.cols();
    if (w1.size() != m_count || w2.rows() != m_count || w2.cols() != m_count) {
        throw DimensionError("psi_grads: adjoint shape mismatch");
    }

    const Eigen::ArrayXd l2 = p.lengthscales2();
    const Eigen::ArrayXd a = l2 + q.variance.array();
    const Eigen::ArrayXd b = l2 + 2.0 * q.variance.array();

    PsiGrads g;
    g.d_log_lengthscales = Eigen::VectorXd::Zero(d_count);
    g.d_z = Eigen::MatrixXd::Zero(m_count, d_count);
    g.d_mean = Eigen::VectorXd::Zero(d_count);
    g.d_variance = Eigen::VectorXd::Zero(d_count);

    // psi0 = sf2: only log_sf2 sees it.
    g.d_log_sf2 = w0 * p.sf2();

    const Eigen::VectorXd psi1_val = psi1(p, z, q);
    for (Eigen::Index m = 0; m < m_count; ++m) {
        const double wv = w1[m] * psi1_val[m];
        if (wv == 0.0) continue;
        g.d_log_sf2 += wv;
        for (Eigen::Index d = 0; d < d_count; ++d) {
            const double delta = q.mean[d] - z(m, d);
            const double ad = a[d];
            g.d_mean[d] += wv * (-delta / ad);
            g.d_z(m, d) += wv * (delta / ad);
            g.d_variance[d] += wv * (-0.5 / ad + 0.5 * delta * delta / (ad * ad));
            g.d_log_lengthscales[d] += wv * ((1.0 - l2[d] / ad) + l2[d] * delta * delta / (ad * ad));
        }
    }

    const Eigen::MatrixXd psi2_val = psi2(p, z, q);
    for (Eigen::Index m = 0; m < m_count; ++m) {
        for (Eigen::Index mp = 0; mp < m_count; ++mp) {
            const double wv = w2(m, mp) * psi2_val(m, mp);
            if (wv == 0.0) continue;
            g.d_log_sf2 += 2.0 * wv;
            for (Eigen::Index d = 0; d < d_count; ++d) {
                const double diff = z(m, d) - z(mp, d);
                const double mid_delta = q.mean[d] - 0.5 * (z(m, d) + z(mp, d));
                const double bd = b[d];
                g.d_mean[d] += wv * (-2.0 * mid_delta / bd);
                g.d_variance[d] += wv * (-1.0 / bd + 2.0 * mid_delta * mid_delta / (bd * bd));
                g.d_log_lengthscales[d] +=
                    wv * (diff * diff / (2.0 * l2[d]) + (1.0 - l2[d] / bd) +
                          2.0 * l2[d] * mid_delta * mid_delta / (bd * bd));
                g.d_z(m, d) += wv * (-diff / (2.0 * l2[d]) + mid_delta / bd);
                g.d_z(mp, d) += wv * (diff / (2.0 * l2[d]) + mid_delta / bd);
            }
        }
    }
    return g;
}

GramGrads gram_grads(const KernelParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& x2,
                     const Eigen::MatrixXd& w) {
    check_dims(p, x.cols(), "gram_grads");
    if (x.cols() != x2.cols()) throw DimensionError("gram_grads: column count mismatch");
    if (w.rows() != x.rows() || w.cols() != x2.rows()) {
        throw DimensionError("gram_grads: adjoint shape mismatch");
    }
    const Eigen::ArrayXd l2 = p.lengthscales2();
    const Eigen::ArrayXd inv_l2 = l2.inverse();
    const double sf2 = p.sf2();

    GramGrads g;
    g.d_log_lengthscales = Eigen::VectorXd::Zero(x.cols());
    g.d_x = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    g.d_x2 = Eigen::MatrixXd::Zero(x2.rows(), x2.cols());

    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x2.rows(); ++j) {
            if (w(i, j) == 0.0) continue;
            const Eigen::ArrayXd diff =
                x.row(i).transpose().array() - x2.row(j).transpose().array();
            const Eigen::ArrayXd scaled = diff * inv_l2;
            const double k = sf2 * std::exp(-0.5 * (diff * scaled).sum());
            const double wk = w(i, j) * k;
            g.d_log_sf2 += wk;
            g.d_log_lengthscales.array() += wk * diff.square() * inv_l2;
            g.d_x.row(i).array() -= wk * scaled.transpose();
            g.d_x2.row(j).array() += wk * scaled.transpose();
        }
    }
    return g;
}

}  // namespace sepdgp::kernel
