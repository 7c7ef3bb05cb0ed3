#pragma once

#include <vector>

#include "s2s/ces.hpp"
#include "s2s/types.hpp"

// Phase-history estimation from an estimated coherence structure. All
// estimators return phases referenced to the first acquisition
// (theta(0) = 0) and wrapped to (-pi, pi]. The interferometric model is
// Gamma = G o (w w^H) with w = exp(j theta), so arg Gamma_ij = theta_i - theta_j.
namespace s2s {

/// Wraps to (-pi, pi].
double wrap_phase(double x);

/// theta <- wrap(theta - theta(0)).
RVector realign_reference(const RVector& theta);

/// (2 / (N (N - 1))) sum_{i<j} cos(theta_i - theta_j - arg(z_i conj z_j)).
/// Throws InvalidArgument for N < 2 or a zero entry in z.
double phase_stat(const CVector& z, const RVector& theta);

/// Phases of the leading eigenvector of gamma, realigned.
RVector eigenvector_phases(const CMatrix& gamma);

struct MagnitudeInverse {
  RMatrix inverse;     // (G_rho)^{-1}
  double shrinkage = 0.0;  // rho actually applied toward the identity
};

/// Inverse of a coherence-magnitude matrix. If G is not safely positive
/// definite it is shrunk toward I with the smallest rho from a fixed ladder
/// that makes it so, then the loading policy applies.
MagnitudeInverse regularized_magnitude_inverse(const RMatrix& g);

struct PhaseLinkResult {
  RVector theta;
  int iterations = 0;
  bool converged = false;
  bool informative = true;  // false when the input carries no phase information
  double objective = 0.0;
  double gradient_norm = 0.0;          // quasi-Newton only: max |df/dtheta_k| / f
  std::vector<double> objective_trace;  // MM only, one entry per iterate
  double magnitude_shrinkage = 0.0;
};

// --- CGG-MLE ---------------------------------------------------------------

struct MleOptions {
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
  int lbfgs_memory = 20;
};

/// (1/L) sum_i (x_i^H M x_i)^s with x_i = diag(exp(-j theta)) z_i. `theta`
/// holds all N phases; the gradient (if requested) is with respect to all N.
double cgg_mle_objective(const CMatrix& samples, const RMatrix& m, double s, const RVector& theta,
                         RVector* gradient = nullptr);

/// Minimizes cgg_mle_objective with M = G^{-1} over theta(1..N-1), theta(0)
/// pinned at 0. Quasi-Newton (limited-memory BFGS, Wolfe line search) on
/// log f, so the gradient tolerance applies to the relative gradient grad f / f.
PhaseLinkResult cgg_mle_phases(const CMatrix& samples, const RMatrix& g, double s, const RVector& init,
                               const MleOptions& options = {});

// --- CFPL and PTA (majorization-minimization) --------------------------------

// Converged when both the relative objective change and the largest phase
// update of an iteration are below their tolerances. The objective test alone
// stops early: near the optimum the objective gap is quadratic in the phase error.
struct MmOptions {
  double rel_tolerance = 1e-10;
  double phase_tolerance = 1e-9;  // radians
  int max_iterations = 1000;
};

/// ||G o (w w^H) - Gamma||_F^2 with G = |Gamma|.
double cfpl_objective(const CMatrix& gamma, const RVector& theta);

/// Covariance-fitting phase linking: maximizes w^H (G o Gamma) w by MM,
/// starting from the leading eigenvector. Throws InvariantViolation if an MM
/// step increases the objective by more than 1e-10 (relative).
PhaseLinkResult cfpl_phases(const CoherenceMatrix& gamma, const MmOptions& options = {});

/// w^H (|Gamma|^{-1} o Gamma) w.
double pta_objective(const CMatrix& gamma, const RMatrix& g_inv, const RVector& theta);

/// Phase triangulation: minimizes pta_objective by MM. Returns zeros and
/// informative = false when Gamma has no off-diagonal content.
PhaseLinkResult pta_phases(const CoherenceMatrix& gamma, const MmOptions& options = {});

}  // namespace s2s
