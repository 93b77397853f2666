#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ctbrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Environment state. Plain column vector; the dimension is fixed per domain.
using State = Eigen::VectorXd;

/// The single random engine used throughout. Every stochastic routine takes
/// one by reference so that runs are reproducible from a seed.
using Rng = std::mt19937_64;

/// Raised when a factorization or solve that must succeed does not (loss of
/// positive-definiteness, singular system, non-finite result).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by queries that need at least one stored element.
class EmptyStructureError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Dimension mismatches and other caller bugs.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Read-only view of a vector's coefficients.
inline std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

inline void require(bool condition, const char* what) {
    if (!condition) throw ContractViolation(what);
}

/// Derives an independent engine for stream `stream` of a master seed.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

}  // namespace ctbrl
