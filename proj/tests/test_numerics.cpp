#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "sepdgp/numerics.hpp"
#include "test_util.hpp"

using namespace sepdgp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("chol_psd identity needs no jitter") {
    const auto f = numerics::chol_psd(MatrixXd::Identity(3, 3));
    CHECK(f.jitter == 0.0);
    CHECK((f.L - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("chol_psd closed-form 2x2") {
    MatrixXd a(2, 2);
    a << 4, 2, 2, 3;
    const auto f = numerics::chol_psd(a);
    CHECK(f.jitter == 0.0);
    CHECK(f.L(0, 0) == doctest::Approx(2.0));
    CHECK(f.L(1, 0) == doctest::Approx(1.0));
    CHECK(f.L(1, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK(f.L(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("chol_psd rejects an indefinite matrix under the default policy") {
    MatrixXd a(2, 2);
    a << 1, 2, 2, 1;  // eigenvalues 3 and -1
    CHECK_THROWS_AS(numerics::chol_psd(a), FactorizationError);
}

TEST_CASE("chol_psd rejects asymmetry") {
    MatrixXd a(2, 2);
    a << 1, 0.5, 0.2, 1;
    CHECK_THROWS_AS(numerics::chol_psd(a), DimensionError);
}

TEST_CASE("chol_psd escalates jitter on a rank-deficient matrix and reports it") {
    const MatrixXd a = MatrixXd::Ones(4, 4);
    const auto f = numerics::chol_psd(a);
    CHECK(f.jitter > 0.0);
    const MatrixXd reconstructed = f.L * f.L.transpose();
    MatrixXd target = a;
    target.diagonal().array() += f.jitter;
    CHECK((reconstructed - target).cwiseAbs().maxCoeff() <= 1e-10 * a.cwiseAbs().maxCoeff());
}

TEST_CASE("chol_psd residual property on random PSD matrices") {
    rng::Rng r(7);
    for (int trial = 0; trial < 25; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(r.raw() % 7);
        const MatrixXd a = test::random_psd(r, n, 0.05);
        const auto f = numerics::chol_psd(a);
        MatrixXd target = a;
        target.diagonal().array() += f.jitter;
        const double resid = (f.L * f.L.transpose() - target).cwiseAbs().maxCoeff();
        CHECK(resid <= 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("solve_psd with identity factor returns B") {
    const auto f = numerics::chol_psd(MatrixXd::Identity(4, 4));
    rng::Rng r(11);
    const MatrixXd b = r.normal_matrix(4, 3);
    CHECK((numerics::solve_psd(f, b) - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve_psd inverts a diagonal") {
    MatrixXd a = MatrixXd::Zero(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 9.0;
    const auto f = numerics::chol_psd(a);
    const MatrixXd inv = numerics::solve_psd(f, MatrixXd::Identity(2, 2).eval());
    CHECK(inv(0, 0) == doctest::Approx(0.25));
    CHECK(inv(1, 1) == doctest::Approx(1.0 / 9.0));
    CHECK(inv(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("solve_psd residual on a random system") {
    rng::Rng r(13);
    const MatrixXd a = test::random_psd(r, 5, 0.2);
    const MatrixXd b = r.normal_matrix(5, 2);
    const auto f = numerics::chol_psd(a);
    const MatrixXd x = numerics::solve_psd(f, b);
    MatrixXd a_eff = a;
    a_eff.diagonal().array() += f.jitter;
    CHECK((a_eff * x - b).cwiseAbs().maxCoeff() <= 1e-8 * b.cwiseAbs().maxCoeff());
}

TEST_CASE("solve_psd shape mismatch") {
    const auto f = numerics::chol_psd(MatrixXd::Identity(3, 3));
    CHECK_THROWS_AS(numerics::solve_psd(f, MatrixXd::Identity(4, 4).eval()), DimensionError);
}

TEST_CASE("logdet of identity is zero") {
    const auto f = numerics::chol_psd(MatrixXd::Identity(4, 4));
    CHECK(numerics::logdet_psd(f) == doctest::Approx(0.0));
}

TEST_CASE("logdet of diag(4,9) is log 36") {
    MatrixXd a = MatrixXd::Zero(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 9.0;
    const auto f = numerics::chol_psd(a);
    CHECK(numerics::logdet_psd(f) == doctest::Approx(std::log(36.0)));
}

TEST_CASE("logdet matches an eigenvalue oracle on a random PSD matrix") {
    rng::Rng r(17);
    const MatrixXd a = test::random_psd(r, 6, 0.3);
    const auto f = numerics::chol_psd(a);
    MatrixXd a_eff = a;
    a_eff.diagonal().array() += f.jitter;
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(a_eff);
    const double expected = eig.eigenvalues().array().log().sum();
    CHECK(numerics::logdet_psd(f) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("logdet of random diagonals equals the sum of logs") {
    rng::Rng r(19);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(r.raw() % 6);
        MatrixXd a = MatrixXd::Zero(n, n);
        double expected = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = r.uniform(0.1, 5.0);
            a(i, i) = v;
            expected += std::log(v);
        }
        const auto f = numerics::chol_psd(a);
        CHECK(numerics::logdet_psd(f) == doctest::Approx(expected).epsilon(1e-12));
    }
}
