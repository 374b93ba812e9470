#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sepdgp/network.hpp"
#include "sepdgp/rng.hpp"

namespace sepdgp::oracle {

// Everything here re-derives its math from scratch (naive kernel sums,
// direct sampling, plain Eigen factorizations) so that it can stand as an
// independent witness for the closed-form implementations. The oracle
// library never links against the core math.

struct McEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    long n_samples = 0;
    std::uint64_t seed = 0;
};

class McUnderflowError : public std::runtime_error {
public:
    explicit McUnderflowError(const std::string& what) : std::runtime_error(what) {}
};

struct McPsi {
    McEstimate psi0;
    std::vector<McEstimate> psi1;
    std::vector<std::vector<McEstimate>> psi2;
};

/// Monte-Carlo kernel expectations under h ~ N(q.mean, diag(q.variance)).
McPsi mc_psi(const kernel::KernelParams& p, const Eigen::MatrixXd& z,
             const kernel::MomentBelief& q, long n_samples, std::uint64_t seed);

/// Monte-Carlo estimate of log Z for one or two layers: sample inducing
/// outputs from the cavities and hidden activations from the first-layer
/// conditional, then average the Gaussian density of y. The returned value
/// is log of the sample mean with a delta-method standard error.
/// layer_jitter aligns the oracle's kernel matrices with the jitter the
/// implementation reports; pass zeros when none was needed.
McEstimate mc_log_z(const network::DgpModel& model, const network::Beliefs& cavities,
                    const Eigen::VectorXd& x, double y, long n_samples, std::uint64_t seed,
                    const std::vector<double>& layer_jitter = {});

/// Central finite differences, one coordinate at a time.
Eigen::VectorXd fd_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& at, double step = 1e-5);

}  // namespace sepdgp::oracle
