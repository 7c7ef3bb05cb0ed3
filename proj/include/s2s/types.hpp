#pragma once

#include <complex>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace s2s {

using cdouble = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Pseudo-random engine used throughout. Every stochastic operation takes one
/// explicitly; callers own the partitioning into substreams.
using Rng = std::mt19937_64;

/// Deterministic substream keyed by (seed, a, b), e.g. (global seed, row, col).
/// Streams for distinct keys are decorrelated by a splitmix64 finalizer.
Rng make_stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

/// Circular complex Gaussian draw with E|z|^2 = 1.
cdouble complex_normal(Rng& rng);

}  // namespace s2s
