#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "sepdgp/kernel.hpp"
#include "sepdgp/oracle.hpp"
#include "test_util.hpp"

using namespace sepdgp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

kernel::KernelParams unit_params(int d) {
    kernel::KernelParams p;
    p.log_sf2 = 0.0;
    p.log_lengthscales = VectorXd::Zero(d);
    return p;
}

}  // namespace

TEST_CASE("kernel_eval at zero distance returns sf2") {
    const auto p = unit_params(2);
    const VectorXd x = VectorXd::Constant(2, 0.3);
    CHECK(kernel::kernel_eval(p, x, x) == doctest::Approx(1.0));
}

TEST_CASE("kernel_eval at distance sqrt(2) with unit lengthscale is 1/e") {
    const auto p = unit_params(1);
    VectorXd x(1), x2(1);
    x << 0.0;
    x2 << std::sqrt(2.0);
    CHECK(kernel::kernel_eval(p, x, x2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    kernel::KernelParams p2 = p;
    p2.log_sf2 = std::log(2.0);
    CHECK(kernel::kernel_eval(p2, x, x2) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("kernel_eval dimension mismatch") {
    const auto p = unit_params(2);
    CHECK_THROWS_AS(kernel::kernel_eval(p, VectorXd::Zero(3), VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("gram of a single point is [[sf2]]") {
    kernel::KernelParams p = unit_params(3);
    p.log_sf2 = std::log(1.7);
    const MatrixXd x = MatrixXd::Constant(1, 3, 0.5);
    const MatrixXd k = kernel::gram(p, x, x);
    CHECK(k.rows() == 1);
    CHECK(k(0, 0) == doctest::Approx(1.7));
}

TEST_CASE("gram with duplicated rows is a constant sf2 block") {
    kernel::KernelParams p = unit_params(2);
    p.log_sf2 = std::log(2.5);
    MatrixXd x(2, 2);
    x << 1.0, -0.5, 1.0, -0.5;
    const MatrixXd k = kernel::gram(p, x, x);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(k(i, j) == doctest::Approx(2.5));
}

TEST_CASE("gram matches elementwise kernel_eval") {
    rng::Rng r(23);
    const auto p = test::random_kernel_params(r, 3);
    const MatrixXd x = test::random_inputs(r, 4, 3);
    const MatrixXd x2 = test::random_inputs(r, 2, 3);
    const MatrixXd k = kernel::gram(p, x, x2);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(k(i, j) == doctest::Approx(kernel::kernel_eval(
                                 p, x.row(i).transpose(), x2.row(j).transpose()))
                                 .epsilon(1e-14));
        }
    }
}

TEST_CASE("psi0 equals sf2 regardless of the belief") {
    rng::Rng r(29);
    for (const double log_sf2 : {0.0, std::log(3.5), std::log(2.0)}) {
        auto p = test::random_kernel_params(r, 2);
        p.log_sf2 = log_sf2;
        auto q = test::random_belief(r, 2);
        CHECK(kernel::psi0(p, q) == std::exp(log_sf2));
        q.variance.setConstant(1e6);
        CHECK(kernel::psi0(p, q) == std::exp(log_sf2));
    }
}

TEST_CASE("psi1 with zero variance collapses to the kernel row") {
    rng::Rng r(31);
    const auto p = test::random_kernel_params(r, 2);
    const MatrixXd z = test::random_inputs(r, 4, 2);
    kernel::MomentBelief q = test::random_belief(r, 2);
    q.variance.setZero();
    const VectorXd v = kernel::psi1(p, z, q);
    for (int m = 0; m < 4; ++m) {
        CHECK(v[m] ==
              doctest::Approx(kernel::kernel_eval(p, q.mean, z.row(m).transpose())).epsilon(1e-13));
    }
}

TEST_CASE("psi1 is symmetric for inducing points mirrored about the mean") {
    const auto p = unit_params(1);
    MatrixXd z(2, 1);
    z << -0.8, 1.2;
    kernel::MomentBelief q;
    q.mean = VectorXd::Constant(1, 0.2);  // midpoint of the two rows
    q.variance = VectorXd::Constant(1, 0.5);
    const VectorXd v = kernel::psi1(p, z, q);
    CHECK(v[0] == doctest::Approx(v[1]).epsilon(1e-14));
}

TEST_CASE("psi1 1-D value at z = mean with unit scales is 1/sqrt(2)") {
    // Closed form: sf2 * sqrt(l^2/(l^2+v)) with zero exponent.
    const auto p = unit_params(1);
    MatrixXd z(1, 1);
    z << 0.4;
    kernel::MomentBelief q;
    q.mean = VectorXd::Constant(1, 0.4);
    q.variance = VectorXd::Constant(1, 1.0);
    const VectorXd v = kernel::psi1(p, z, q);
    CHECK(v[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));

    // Anchored against the MC oracle as well.
    const auto mc = oracle::mc_psi(p, z, q, 1000000, 12345);
    CHECK(std::abs(v[0] - mc.psi1[0].value) <= 3.0 * mc.psi1[0].standard_error);
}

TEST_CASE("psi1/psi2 match the MC oracle on random configurations") {
    for (int cfg = 0; cfg < 5; ++cfg) {
        rng::Rng r(100 + cfg);
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(r.raw() % 3);
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(r.raw() % 4);
        const auto p = test::random_kernel_params(r, d);
        const MatrixXd z = test::random_inputs(r, m, d);
        const auto q = test::random_belief(r, d);

        const VectorXd a1 = kernel::psi1(p, z, q);
        const MatrixXd a2 = kernel::psi2(p, z, q);
        const auto mc = oracle::mc_psi(p, z, q, 200000, 5000 + cfg);
        for (Eigen::Index i = 0; i < m; ++i) {
            CHECK(std::abs(a1[i] - mc.psi1[i].value) <= 3.0 * mc.psi1[i].standard_error);
            for (Eigen::Index j = 0; j < m; ++j) {
                CHECK(std::abs(a2(i, j) - mc.psi2[i][j].value) <=
                      3.0 * mc.psi2[i][j].standard_error);
            }
        }
    }
}

TEST_CASE("psi2 with zero variance is the outer product of kernel values") {
    rng::Rng r(37);
    const auto p = test::random_kernel_params(r, 2);
    const MatrixXd z = test::random_inputs(r, 3, 2);
    kernel::MomentBelief q = test::random_belief(r, 2);
    q.variance.setZero();
    const MatrixXd v = kernel::psi2(p, z, q);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double ki = kernel::kernel_eval(p, z.row(i).transpose(), q.mean);
            const double kj = kernel::kernel_eval(p, q.mean, z.row(j).transpose());
            CHECK(v(i, j) == doctest::Approx(ki * kj).epsilon(1e-12));
        }
    }
}

TEST_CASE("psi collapse at variance 1e-12 within 1e-8 relative") {
    rng::Rng r(41);
    const auto p = test::random_kernel_params(r, 3);
    const MatrixXd z = test::random_inputs(r, 5, 3);
    kernel::MomentBelief q = test::random_belief(r, 3);
    q.variance.setConstant(1e-12);
    const VectorXd row = kernel::gram(p, q.mean.transpose(), z).transpose();
    const VectorXd v1 = kernel::psi1(p, z, q);
    const MatrixXd v2 = kernel::psi2(p, z, q);
    for (int m = 0; m < 5; ++m) {
        CHECK(std::abs(v1[m] - row[m]) <= 1e-8 * row[m]);
        for (int mp = 0; mp < 5; ++mp) {
            CHECK(std::abs(v2(m, mp) - row[m] * row[mp]) <= 1e-8 * row[m] * row[mp]);
        }
    }
}

TEST_CASE("psi2 is symmetric and PSD on 100 random configurations") {
    for (int cfg = 0; cfg < 100; ++cfg) {
        rng::Rng r(200 + cfg);
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(r.raw() % 4);
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(r.raw() % 6);
        const auto p = test::random_kernel_params(r, d);
        const MatrixXd z = test::random_inputs(r, m, d);
        const auto q = test::random_belief(r, d);
        const MatrixXd v2 = kernel::psi2(p, z, q);
        CHECK((v2 - v2.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * v2.cwiseAbs().maxCoeff());
        const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(v2);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * v2.trace());
    }
}

TEST_CASE("increasing variance never increases psi1 at an inducing point on the mean") {
    for (int cfg = 0; cfg < 20; ++cfg) {
        rng::Rng r(300 + cfg);
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(r.raw() % 3);
        const auto p = test::random_kernel_params(r, d);
        kernel::MomentBelief q = test::random_belief(r, d);
        MatrixXd z(1, d);
        z.row(0) = q.mean.transpose();
        double previous = kernel::psi1(p, z, q)[0];
        for (int bump = 0; bump < 5; ++bump) {
            q.variance[static_cast<Eigen::Index>(r.raw() % d)] += r.uniform(0.1, 1.0);
            const double current = kernel::psi1(p, z, q)[0];
            CHECK(current <= previous + 1e-15);
            previous = current;
        }
    }
}

TEST_CASE("psi_grads trivial derivatives of psi0") {
    rng::Rng r(43);
    const auto p = test::random_kernel_params(r, 2);
    const MatrixXd z = test::random_inputs(r, 3, 2);
    const auto q = test::random_belief(r, 2);
    const auto g = kernel::psi_grads(p, z, q, 1.0, VectorXd::Zero(3), MatrixXd::Zero(3, 3));
    CHECK(g.d_log_sf2 == doctest::Approx(std::exp(p.log_sf2)));
    CHECK(g.d_log_lengthscales.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_z.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_variance.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("psi1 gradient w.r.t. the mean vanishes at z = mean") {
    rng::Rng r(47);
    const auto p = test::random_kernel_params(r, 2);
    kernel::MomentBelief q = test::random_belief(r, 2);
    MatrixXd z(1, 2);
    z.row(0) = q.mean.transpose();
    VectorXd w1(1);
    w1 << 1.0;
    const auto g = kernel::psi_grads(p, z, q, 0.0, w1, MatrixXd::Zero(1, 1));
    CHECK(g.d_mean.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("psi_grads match finite differences on 20 random configurations") {
    for (int cfg = 0; cfg < 20; ++cfg) {
        rng::Rng r(400 + cfg);
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(r.raw() % 3);
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(r.raw() % 4);
        const auto p = test::random_kernel_params(r, d);
        const MatrixXd z = test::random_inputs(r, m, d);
        const auto q = test::random_belief(r, d, 0.05, 1.0);
        const double w0 = r.uniform(-1.0, 1.0);
        const VectorXd w1 = r.normal_vector(m);
        const MatrixXd w2 = r.normal_matrix(m, m);

        const auto g = kernel::psi_grads(p, z, q, w0, w1, w2);

        // Flatten into [log_sf2, log_l, z, mean, variance] and diff through.
        const Eigen::Index n_params = 1 + d + m * d + d + d;
        VectorXd theta(n_params);
        Eigen::Index at = 0;
        theta[at++] = p.log_sf2;
        theta.segment(at, d) = p.log_lengthscales;
        at += d;
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index jj = 0; jj < d; ++jj) theta[at++] = z(i, jj);
        theta.segment(at, d) = q.mean;
        at += d;
        theta.segment(at, d) = q.variance;

        const auto f = [&](const VectorXd& t) {
            kernel::KernelParams pp = p;
            kernel::MomentBelief qq = q;
            MatrixXd zz = z;
            Eigen::Index k = 0;
            pp.log_sf2 = t[k++];
            pp.log_lengthscales = t.segment(k, d);
            k += d;
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index jj = 0; jj < d; ++jj) zz(i, jj) = t[k++];
            qq.mean = t.segment(k, d);
            k += d;
            qq.variance = t.segment(k, d);
            return w0 * kernel::psi0(pp, qq) + w1.dot(kernel::psi1(pp, zz, qq)) +
                   w2.cwiseProduct(kernel::psi2(pp, zz, qq)).sum();
        };
        const VectorXd fd = oracle::fd_grad(f, theta, 1e-5);

        VectorXd analytic(n_params);
        at = 0;
        analytic[at++] = g.d_log_sf2;
        analytic.segment(at, d) = g.d_log_lengthscales;
        at += d;
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index jj = 0; jj < d; ++jj) analytic[at++] = g.d_z(i, jj);
        analytic.segment(at, d) = g.d_mean;
        at += d;
        analytic.segment(at, d) = g.d_variance;

        for (Eigen::Index i = 0; i < n_params; ++i) {
            const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-8});
            CHECK(std::abs(analytic[i] - fd[i]) / denom <= 1e-5);
        }
    }
}
