#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sepdgp/oracle.hpp"
#include "test_util.hpp"

using namespace sepdgp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("mc_psi with zero variance is exact with zero standard error") {
    rng::Rng r(111);
    const auto p = test::random_kernel_params(r, 2);
    const MatrixXd z = test::random_inputs(r, 3, 2);
    kernel::MomentBelief q = test::random_belief(r, 2);
    q.variance.setZero();
    const auto mc = oracle::mc_psi(p, z, q, 5000, 1);
    for (int m = 0; m < 3; ++m) {
        CHECK(mc.psi1[static_cast<std::size_t>(m)].standard_error == 0.0);
        CHECK(mc.psi1[static_cast<std::size_t>(m)].value ==
              doctest::Approx(kernel::kernel_eval(p, q.mean, z.row(m).transpose()))
                  .epsilon(1e-12));
    }
    CHECK(mc.psi0.value == doctest::Approx(std::exp(p.log_sf2)));
    CHECK(mc.psi0.standard_error == 0.0);
}

TEST_CASE("mc_psi is reproducible for a fixed seed") {
    rng::Rng r(113);
    const auto p = test::random_kernel_params(r, 2);
    const MatrixXd z = test::random_inputs(r, 2, 2);
    const auto q = test::random_belief(r, 2);
    const auto a = oracle::mc_psi(p, z, q, 20000, 99);
    const auto b = oracle::mc_psi(p, z, q, 20000, 99);
    CHECK(a.psi1[0].value == b.psi1[0].value);
    CHECK(a.psi2[1][0].value == b.psi2[1][0].value);
    const auto c = oracle::mc_psi(p, z, q, 20000, 100);
    CHECK(a.psi1[0].value != c.psi1[0].value);
}

TEST_CASE("quadrupling the sample count halves the standard error within 30%") {
    rng::Rng r(117);
    const auto p = test::random_kernel_params(r, 1);
    const MatrixXd z = test::random_inputs(r, 1, 1);
    const auto q = test::random_belief(r, 1, 0.3, 1.0);
    const auto small = oracle::mc_psi(p, z, q, 100000, 7);
    const auto big = oracle::mc_psi(p, z, q, 400000, 7);
    const double ratio = big.psi1[0].standard_error / small.psi1[0].standard_error;
    CHECK(ratio >= 0.5 * 0.7);
    CHECK(ratio <= 0.5 * 1.3);
}

TEST_CASE("mc_log_z matches the analytic value for a single layer") {
    rng::Rng r(119);
    network::DgpModel model;
    model.input_dim = 2;
    layer::SparseGpLayer lay;
    lay.input_dim = 2;
    lay.output_dim = 1;
    lay.kernel = test::random_kernel_params(r, 2);
    lay.log_noise = std::log(0.2);
    lay.z = test::separated_inputs(r, 4, 2);
    model.layers.push_back(lay);
    network::Beliefs beliefs(1);
    beliefs[0].push_back(layer::BeliefMoments{0.5 * r.normal_vector(4),
                                              test::random_psd(r, 4, 0.25)});
    const auto ctx = network::make_context(model, beliefs);
    const double y = 0.4;
    const Eigen::VectorXd x = test::random_inputs(r, 1, 2).row(0).transpose();
    const double analytic = network::log_z(model, ctx, x, y);
    const auto mc = oracle::mc_log_z(model, beliefs, x, y, 400000, 11,
                                     {ctx.layers[0].jitter()});
    CHECK(std::abs(analytic - mc.value) <= 3.0 * mc.standard_error);
}

TEST_CASE("a deterministic second layer reduces Z to the output noise density") {
    rng::Rng r(121);
    network::DgpModel model;
    model.input_dim = 1;
    layer::SparseGpLayer first;
    first.input_dim = 1;
    first.output_dim = 1;
    first.kernel = test::random_kernel_params(r, 1);
    first.log_noise = std::log(0.1);
    first.z = test::separated_inputs(r, 3, 1);
    model.layers.push_back(first);
    layer::SparseGpLayer second;
    second.input_dim = 1;
    second.output_dim = 1;
    second.kernel.log_sf2 = std::log(1e-30);  // no signal at all
    second.kernel.log_lengthscales = VectorXd::Zero(1);
    second.log_noise = std::log(0.3);
    second.z = MatrixXd::Zero(1, 1);
    model.layers.push_back(second);

    network::Beliefs beliefs(2);
    beliefs[0].push_back(layer::BeliefMoments{0.4 * r.normal_vector(3),
                                              test::random_psd(r, 3, 0.3)});
    // A point mass at zero: the conditional weight k/K is sf2-independent,
    // so the belief itself must carry no mass for the layer to go silent.
    beliefs[1].push_back(
        layer::BeliefMoments{VectorXd::Zero(1), 1e-12 * MatrixXd::Identity(1, 1)});

    const double y = 0.7;
    const VectorXd x = VectorXd::Constant(1, 0.2);
    const double expected =
        -0.5 * std::log(2.0 * M_PI * 0.3) - 0.5 * y * y / 0.3;

    const auto ctx = network::make_context(model, beliefs);
    const double analytic = network::log_z(model, ctx, x, y);
    CHECK(analytic == doctest::Approx(expected).epsilon(1e-6));
    std::vector<double> jitters;
    for (const auto& l : ctx.layers) jitters.push_back(l.jitter());
    const auto mc = oracle::mc_log_z(model, beliefs, x, y, 200000, 13, jitters);
    CHECK(std::abs(mc.value - expected) <= 3.0 * mc.standard_error + 1e-9);
}

TEST_CASE("mc_log_z reports underflow instead of returning -inf") {
    rng::Rng r(123);
    network::DgpModel model;
    model.input_dim = 1;
    layer::SparseGpLayer lay;
    lay.input_dim = 1;
    lay.output_dim = 1;
    lay.kernel = test::random_kernel_params(r, 1);
    lay.log_noise = std::log(0.01);
    lay.z = MatrixXd::Zero(1, 1);
    model.layers.push_back(lay);
    network::Beliefs beliefs(1);
    beliefs[0].push_back(
        layer::BeliefMoments{VectorXd::Zero(1), MatrixXd::Identity(1, 1)});
    CHECK_THROWS_AS(oracle::mc_log_z(model, beliefs, VectorXd::Zero(1), 1e6, 1000, 3),
                    oracle::McUnderflowError);
}

TEST_CASE("fd_grad on x squared and on a constant") {
    const auto square = [](const VectorXd& v) { return v[0] * v[0]; };
    VectorXd at(1);
    at << 3.0;
    const VectorXd g = oracle::fd_grad(square, at, 1e-5);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-8));

    const auto constant = [](const VectorXd&) { return 2.5; };
    const VectorXd g2 = oracle::fd_grad(constant, VectorXd::Zero(3), 1e-5);
    CHECK(g2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fd_grad refuses non-finite evaluations") {
    const auto bad = [](const VectorXd& v) { return std::log(v[0]); };
    VectorXd at(1);
    at << 1e-7;  // crossing zero within the step
    CHECK_THROWS_AS(oracle::fd_grad(bad, at, 1e-5), NonFiniteGradientError);
}
