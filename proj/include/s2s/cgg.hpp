#pragma once

#include <vector>

#include "s2s/types.hpp"

// Complex generalized Gaussian (CGG) model: density generator exp(-t^s / b).
// s = 1 is the circular complex Gaussian; s < 1 gives heavier tails.
namespace s2s {

/// log b with b = (N Gamma(N/s) / Gamma((N+1)/s))^s, in log-Gamma space.
double cgg_log_b(Index dim, double s);

/// exp(cgg_log_b); throws NumericError if b is not representable.
double cgg_b(Index dim, double s);

/// Log-density of CGG(Sigma, s) at z. Throws NumericError on a non-PD scatter.
double cgg_log_pdf(const CVector& z, const CMatrix& scatter, double s);

/// Log-likelihood sum over the columns of `samples`.
double cgg_log_likelihood(const CMatrix& samples, const CMatrix& scatter, double s);

struct ShapeSearch {
  double s_min = 0.01;
  double s_max = 10.0;
  int grid_points = 61;  // log-spaced
};

struct ShapeEstimate {
  double s = 1.0;
  double objective = 0.0;
  bool at_lower_bound = false;
  bool at_upper_bound = false;
};

/// Per-sample average of the s-dependent log-likelihood terms,
/// log s - lgamma(N/s) - (N/s) log b - mean(q_i^s) / b, with q_i the
/// quadratic forms under the scatter matrix. Samples keep their scale: the
/// objective carries the magnitude information that s describes.
double shape_objective(const RVector& quadratic_forms, Index dim, double s);

/// Maximizer of shape_objective over [s_min, s_max]: log-grid scan followed by
/// Brent refinement in log s around the best grid point. Throws NumericError
/// if the objective is non-finite over the whole grid.
ShapeEstimate estimate_shape_s(const CMatrix& samples, const CMatrix& scatter, const ShapeSearch& search = {});

/// One MLE fixed-point step (1/L) sum phi(q_i) z_i z_i^H, phi(t) = (s/b) t^(s-1).
/// `regularized` reports that the result was rank deficient and got loaded.
CMatrix cgg_scatter_update(const CMatrix& samples, const CMatrix& scatter, double s, bool* regularized = nullptr);

struct CggOptions {
  ShapeSearch search{};
  double s_tol = 1e-4;        // |delta s| / s
  double scatter_tol = 1e-4;  // relative Frobenius change per round
  int max_rounds = 50;

  void validate() const;
};

struct CggFit {
  double s = 1.0;
  CMatrix scatter;
  int iterations = 0;  // outer alternation rounds
  bool converged = false;
  double log_likelihood = 0.0;
  bool s_at_bound = false;
  bool regularized = false;  // initial or updated scatter needed diagonal loading
  std::vector<double> log_likelihood_trace;  // after every s-step and scatter-step
};

/// Alternating ML: SCM initialization, then rounds of one s-step, one
/// fixed-point scatter step and an exact rescaling of the scatter for the
/// current s. The scatter step backtracks toward the current matrix and the
/// other steps are only kept when they improve, so the likelihood never
/// decreases.
CggFit estimate_cgg(const CMatrix& samples, const CggOptions& options = {});

}  // namespace s2s
