#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sepdgp/network.hpp"

namespace sepdgp::verify {

/// Oracle-backed verification suites. Each check compares the closed-form
/// implementation against an independent route (Monte Carlo, finite
/// differences, or direct Gaussian algebra) and reports a discrepancy
/// `value` against an allowance `bound`; the check passes iff value <= bound.

struct Options {
    std::uint64_t seed = 23;
    bool quick = false;      // 1e4 MC samples instead of 1e6
    double psi1_bias = 0.0;  // fault-injection hook used by the test suite
};

struct CheckResult {
    std::string suite;
    std::string name;
    double value = 0.0;
    double bound = 0.0;
    bool pass = false;
};

/// psi0 exactness plus psi1/psi2 against MC, 20 seeded configurations with
/// input dimension in {1,2,5} and inducing counts in {1,3,10}; 3 SE bands.
std::vector<CheckResult> psi_mc_suite(const Options& opt);

/// Two-layer log Z against naive MC in the near-identity-second-layer regime
/// (second-layer lengthscale at least 10x the hidden spread); 10 configs.
std::vector<CheckResult> logz_mc_suite(const Options& opt);

/// grad_log_z against central finite differences (step 1e-5) on 10 two-layer
/// configs; relative error 1e-4, absolute 1e-8 below gradient 1e-6.
std::vector<CheckResult> grad_fd_suite(const Options& opt);

/// Conjugate moment-matching: the scalar textbook case to 1e-12 and 100
/// randomized scalar/5-dimensional conjugate cases to 1e-10.
std::vector<CheckResult> sep_conjugate_suite(const Options& opt);

/// Single-layer collapse: log Z equals the direct Gaussian marginal to 1e-9
/// on 100 seeded configs.
std::vector<CheckResult> collapse_suite(const Options& opt);

std::vector<CheckResult> run_all(const Options& opt);

bool all_pass(const std::vector<CheckResult>& results);

}  // namespace sepdgp::verify
