#pragma once

#include <stdexcept>
#include <string>

namespace sepdgp {

/// Cholesky factorization did not succeed within the jitter budget.
class FactorizationError : public std::runtime_error {
public:
    explicit FactorizationError(const std::string& what) : std::runtime_error(what) {}
};

/// Cavity precision lost positive definiteness after removing a site.
class CavityNotPdError : public std::runtime_error {
public:
    explicit CavityNotPdError(const std::string& what) : std::runtime_error(what) {}
};

/// A propagated variance fell below the 1e-12 floor; never clamped.
class NumericalVarianceError : public std::runtime_error {
public:
    explicit NumericalVarianceError(const std::string& what) : std::runtime_error(what) {}
};

/// A gradient evaluation produced NaN or infinity.
class NonFiniteGradientError : public std::runtime_error {
public:
    explicit NonFiniteGradientError(const std::string& what) : std::runtime_error(what) {}
};

/// Moment-matched covariance was not positive definite.
class MomentMatchError : public std::runtime_error {
public:
    explicit MomentMatchError(const std::string& what) : std::runtime_error(what) {}
};

class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sepdgp
