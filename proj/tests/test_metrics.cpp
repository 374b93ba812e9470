#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sepdgp/data.hpp"
#include "sepdgp/metrics.hpp"
#include "sepdgp/rng.hpp"

using namespace sepdgp;
using Eigen::VectorXd;

TEST_CASE("rmse of a perfect prediction is zero") {
    VectorXd t(3);
    t << 1, 2, 3;
    CHECK(metrics::rmse(t, t) == 0.0);
}

TEST_CASE("rmse of unit residuals is one") {
    VectorXd p(2), t(2);
    p << 1.0, -1.0;
    t << 0.0, 0.0;
    CHECK(metrics::rmse(p, t) == doctest::Approx(1.0));
}

TEST_CASE("rmse rejects mismatched lengths") {
    CHECK_THROWS_AS(metrics::rmse(VectorXd::Zero(2), VectorXd::Zero(3)), DimensionError);
    CHECK_THROWS_AS(metrics::rmse(VectorXd(), VectorXd()), DimensionError);
}

TEST_CASE("mll of a standard normal at zero") {
    VectorXd m = VectorXd::Zero(1), v = VectorXd::Ones(1), t = VectorXd::Zero(1);
    CHECK(metrics::mll(m, v, t) == doctest::Approx(-0.918939).epsilon(1e-6));
}

TEST_CASE("doubling the variance away from the optimum lowers mll") {
    VectorXd m = VectorXd::Zero(4), t(4);
    t << 0.5, -0.5, 0.25, -0.25;
    // optimum variance per point is the squared residual; use its mean
    const double opt = t.array().square().mean();
    const VectorXd v_opt = VectorXd::Constant(4, opt);
    const VectorXd v_double = VectorXd::Constant(4, 2.0 * opt);
    CHECK(metrics::mll(m, v_opt, t) > metrics::mll(m, v_double, t));
}

TEST_CASE("mll rejects non-positive variances") {
    VectorXd m = VectorXd::Zero(2), t = VectorXd::Zero(2);
    VectorXd v(2);
    v << 1.0, 0.0;
    CHECK_THROWS_AS(metrics::mll(m, v, t), DimensionError);
}

TEST_CASE("metrics are invariant to shuffling the test points") {
    rng::Rng r(77);
    VectorXd m = r.normal_vector(20);
    VectorXd v = VectorXd::Constant(20, 0.5).array() + 0.1;
    VectorXd t = r.normal_vector(20);
    const double rmse0 = metrics::rmse(m, t);
    const double mll0 = metrics::mll(m, v, t);
    const auto perm = r.permutation(20);
    VectorXd m2(20), v2(20), t2(20);
    for (int i = 0; i < 20; ++i) {
        m2[i] = m[static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])];
        v2[i] = v[static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])];
        t2[i] = t[static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])];
    }
    CHECK(metrics::rmse(m2, t2) == doctest::Approx(rmse0).epsilon(1e-14));
    CHECK(metrics::mll(m2, v2, t2) == doctest::Approx(mll0).epsilon(1e-14));
}

TEST_CASE("raw-scale mll equals standardized mll minus log target std") {
    rng::Rng r(79);
    const double target_std = 3.7;
    const double target_mean = -2.0;
    VectorXd m_std = r.normal_vector(15);
    VectorXd v_std = VectorXd::Constant(15, 0.0).array() + 0.2;
    VectorXd t_std = r.normal_vector(15);

    const VectorXd m_raw = (m_std.array() * target_std + target_mean).matrix();
    const VectorXd v_raw = v_std * target_std * target_std;
    const VectorXd t_raw = (t_std.array() * target_std + target_mean).matrix();

    const double lhs = metrics::mll(m_raw, v_raw, t_raw);
    const double rhs = metrics::mll(m_std, v_std, t_std) - std::log(target_std);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("evaluate fills the full report") {
    VectorXd m(2), v(2), t(2);
    m << 0.0, 1.0;
    v << 1.0, 1.0;
    t << 0.0, 1.0;
    const auto rep = metrics::evaluate(m, v, t);
    CHECK(rep.n_test == 2);
    CHECK(rep.rmse == 0.0);
    CHECK(rep.per_point_log_densities.size() == 2);
    CHECK(rep.mll == doctest::Approx(rep.per_point_log_densities.mean()));
}
