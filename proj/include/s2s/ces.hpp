#pragma once

#include <variant>

#include "s2s/types.hpp"

// Complex elliptically symmetric model primitives: sampling, Tyler's shape
// estimator, shrinkage and coherence normalization.
namespace s2s {

/// Trace-normalized (tr = N) Hermitian scatter matrix.
class ShapeMatrix {
 public:
  /// Hermitizes `scatter` and rescales it to trace N. Throws InvalidArgument on
  /// a non-square, non-finite or non-positive-trace input.
  static ShapeMatrix from_scatter(const CMatrix& scatter);

  const CMatrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }

 private:
  explicit ShapeMatrix(CMatrix m) : m_(std::move(m)) {}
  CMatrix m_;
};

/// Unit-diagonal Hermitian matrix Gamma_ij = Sigma_ij / sqrt(Sigma_ii Sigma_jj).
class CoherenceMatrix {
 public:
  /// Wraps an already unit-diagonal Hermitian matrix (validated to 1e-10).
  static CoherenceMatrix from_matrix(const CMatrix& gamma);

  const CMatrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }

  /// Element-wise magnitudes G_ij = |Gamma_ij|.
  RMatrix magnitudes() const { return m_.cwiseAbs(); }

  /// Mean of |Gamma_ij| over the strict upper triangle (0 when N = 1).
  double mean_coherence() const;

 private:
  explicit CoherenceMatrix(CMatrix m) : m_(std::move(m)) {}
  CMatrix m_;
};

CoherenceMatrix normalize_to_coherence(const CMatrix& scatter);

// --- magnitude laws for z = R * A * u ------------------------------------
//
// Normalization: for `Rayleigh`, R^2 ~ Gamma(N, 1), so z = R A u is exactly
// CN(0, Sigma) and E[z z^H] = Sigma. `KTexture` multiplies R^2 by an
// independent unit-mean Gamma texture of variance xi (compound Gaussian /
// K-distributed; xi = 0 reduces to Rayleigh). `ConstantMagnitude` fixes R.

struct Rayleigh {};
struct KTexture {
  double xi = 0.0;
};
struct ConstantMagnitude {
  double value = 1.0;
};
using MagnitudeLaw = std::variant<Rayleigh, KTexture, ConstantMagnitude>;

void validate(const MagnitudeLaw& law);

/// Draws R for dimension `dim`.
double sample_magnitude(const MagnitudeLaw& law, Index dim, Rng& rng);

/// Unit-norm complex vector uniformly distributed on the complex hypersphere.
CVector sample_uniform_sphere(Index dim, Rng& rng);

/// Draws z = R * A * u with A the Hermitian square root of the scatter.
class CesSampler {
 public:
  CesSampler(const CMatrix& scatter, MagnitudeLaw law);

  CVector operator()(Rng& rng) const;

  /// `count` draws as the columns of an N x count matrix.
  CMatrix draw(Index count, Rng& rng) const;

  const CMatrix& factor() const noexcept { return factor_; }

 private:
  CMatrix factor_;
  MagnitudeLaw law_;
};

CVector sample_ces(const CMatrix& scatter, const MagnitudeLaw& law, Rng& rng);

// --- Tyler's M-estimator -------------------------------------------------

struct TylerOptions {
  double tol = 1e-6;  // relative Frobenius change between iterates
  int max_iter = 100;
};

struct TylerFit {
  ShapeMatrix shape;
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
};

/// Fixed-point iteration started from the identity; never throws on
/// non-convergence (reports it in the result). Samples are the columns.
TylerFit tyler_fit(const CMatrix& samples, const TylerOptions& options = {});

/// As tyler_fit, but throws ConvergenceError (carrying the last iterate) when
/// the iteration cap is reached.
ShapeMatrix tyler_estimate(const CMatrix& samples, const TylerOptions& options = {});

// --- shrinkage -----------------------------------------------------------

/// Plug-in shrinkage: rho = min(1, (N/L) * kappa / (kappa + psi - 1)) where
/// psi = N tr(M^2) / tr(M)^2 is the sphericity and kappa the elliptical
/// kurtosis (1 for Gaussian data).
struct AutoShrinkage {
  Index sample_count = 0;
  double kurtosis = 1.0;
};
using ShrinkageCoefficient = std::variant<double, AutoShrinkage>;

double auto_shrinkage_coefficient(const CMatrix& m, const AutoShrinkage& mode);

/// kappa = mean ||z||^4 / (tr(S)^2 + tr(S^2)), S the sample covariance.
/// Equals E[texture^2] for compound-Gaussian data.
double elliptical_kurtosis(const CMatrix& samples);

/// (1 - rho) M + rho (tr M / N) I.
CMatrix shrink_to_identity(const CMatrix& m, const ShrinkageCoefficient& coefficient);

}  // namespace s2s
