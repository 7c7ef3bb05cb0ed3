#pragma once

#include "s2s/types.hpp"

// Small dense Hermitian helpers shared by the estimators.
namespace s2s::linalg {

/// Diagonal loading policy: when the condition number of a Hermitian matrix
/// exceeds kLoadingCondition, kLoadingEpsilon * tr/N is added to the diagonal
/// before inversion.
inline constexpr double kLoadingCondition = 1e12;
inline constexpr double kLoadingEpsilon = 1e-9;

struct HermitianEig {
  RVector values;   // ascending
  CMatrix vectors;  // columns
};

CMatrix hermitian_part(const CMatrix& m);

HermitianEig eig(const CMatrix& m);

/// ||a - b||_F / ||b||_F
double relative_frobenius(const CMatrix& a, const CMatrix& b);

double condition_number(const CMatrix& m);

/// Applies the loading policy. `loaded` reports whether it fired.
CMatrix load_if_ill_conditioned(const CMatrix& m, bool* loaded = nullptr);

/// Unique Hermitian PSD square root. Throws NumericError when an eigenvalue is
/// negative beyond round-off.
CMatrix hermitian_sqrt(const CMatrix& m);

/// Inverse of a Hermitian positive-definite matrix after the loading policy.
/// Throws NumericError if the (loaded) matrix is not positive definite.
CMatrix inverse_hpd(const CMatrix& m);

/// Sample covariance (1/L) Z Z^H of the columns of `samples`.
CMatrix sample_covariance(const CMatrix& samples);

/// Per-column quadratic forms z_i^H M^{-1} z_i using a loaded Cholesky solve.
RVector quadratic_forms(const CMatrix& samples, const CMatrix& m);

}  // namespace s2s::linalg
