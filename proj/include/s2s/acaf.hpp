#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "s2s/ces.hpp"
#include "s2s/types.hpp"

// Angular Consistency Adaptive Filter: selection of shape-statistically
// homogeneous pixels (SSHP) inside a window with the CACG whitened statistic
// t = z~^H Sigma^{-1} z~ and parametric-bootstrap thresholds.
namespace s2s {

/// Samples of one processing window; column i is the temporal vector of the
/// window pixel with row-major linear index i.
struct WindowSamples {
  CMatrix vectors;
  int rows = 0;
  int cols = 0;
  int ref_index = 0;

  Index dim() const noexcept { return vectors.rows(); }
  Index count() const noexcept { return vectors.cols(); }

  /// Throws InvalidArgument on inconsistent geometry or a zero vector.
  void validate() const;
};

enum class Sidedness { right, two };

struct AlignmentResult {
  WindowSamples aligned;
  /// Leading eigenvalue of the Tyler estimate is repeated within 1e-12; the
  /// first eigenvector was used.
  bool ambiguous = false;
};

/// Removes the common per-acquisition phase: every vector is multiplied by
/// exp(-j arg v_max), v_max the leading eigenvector of the Tyler estimate over
/// all window samples.
AlignmentResult phase_align(const WindowSamples& window, const TylerOptions& tyler = {});

struct AutocorrProfile {
  std::vector<double> values;
  double mean_value = 0.0;
};

/// R_tau = |sum_n z(n) conj(z(n + tau))| for each requested lag (lag 0 gives 1).
AutocorrProfile autocorr_profile(const CVector& unit_vector, std::span<const int> lags);

/// Lags {1, ..., min(max_lag, N - 1)}.
std::vector<int> default_lags(Index dim, int max_lag = 10);

double t_statistic(const CVector& z_tilde, const ShapeMatrix& sigma_ref);

struct TestThresholds {
  std::optional<double> q_low;
  double q_high = 0.0;
  double alpha = 0.05;
  int n_draws = 0;
};

/// Nearest-rank empirical quantile of sorted data.
double nearest_rank_quantile(std::span<const double> sorted, double p);

/// Draws on the probability simplex, w = |v|^2 for v uniform on the complex
/// sphere (flat Dirichlet). Under the null the bootstrap statistic is
/// t = 1 / sum_k lambda_k w_k, with lambda the spectrum of Sigma_ref, so one
/// draw set can be reused for every threshold evaluation in a window.
class SimplexDraws {
 public:
  SimplexDraws(Index dim, int n_draws, Rng& rng);

  Index dim() const noexcept { return weights_.rows(); }
  int size() const noexcept { return static_cast<int>(weights_.cols()); }
  const RMatrix& weights() const noexcept { return weights_; }

 private:
  RMatrix weights_;
};

/// Whitening test built from one eigendecomposition of the (loaded) reference
/// shape matrix: per-pixel statistics and bootstrap thresholds.
class WhitenedTest {
 public:
  explicit WhitenedTest(const ShapeMatrix& sigma_ref);

  double statistic(const CVector& z_tilde) const;
  RVector statistics(const CMatrix& unit_vectors) const;

  /// Sorted bootstrap statistics for the given draws.
  std::vector<double> null_distribution(const SimplexDraws& draws) const;

  TestThresholds thresholds(const SimplexDraws& draws, double alpha, Sidedness sided) const;

  const RVector& spectrum() const noexcept { return eigenvalues_; }

 private:
  RVector eigenvalues_;
  CMatrix eigenvectors_;
};

/// Parametric bootstrap of the null distribution of t under CACG(Sigma_ref).
TestThresholds bootstrap_thresholds(const ShapeMatrix& sigma_ref, double alpha, Sidedness sided, int n_draws,
                                    Rng& rng);

/// Direct-route bootstrap draw set z~ = A u / ||A u||, A = Sigma_ref^{1/2}:
/// sorted statistics t = z~^H Sigma_ref^{-1} z~.
std::vector<double> bootstrap_null_direct(const ShapeMatrix& sigma_ref, int n_draws, Rng& rng);

bool passes(double t, const TestThresholds& th, Sidedness sided);

/// Initial shape matrix of a small pixel set: Tyler's estimate shrunk toward
/// the identity by `scale` times the plug-in coefficient for the set size.
/// With only N + 1 samples the raw fixed point is nearly singular and rejects
/// almost every pixel outside the set; the full plug-in amount flattens it
/// enough to admit much of a less coherent class.
ShapeMatrix seed_shape(const CMatrix& unit_vectors, std::span<const int> idx, double scale = 0.25,
                       const TylerOptions& tyler = {});

struct RefineOptions {
  Sidedness sided = Sidedness::right;
  double alpha = 0.05;
  int k_max = 10;
  double epsilon = 1e-4;
  TylerOptions tyler{};
};

struct RefineResult {
  std::vector<int> selected;  // ascending pixel indices
  ShapeMatrix sigma;
  int iterations = 0;
  bool small_set = false;  // survivors < N + 1; caller should fall back
};

/// Iterative refinement of an SSHP set. Each iteration tests every pixel of
/// `pool` against thresholds from the current shape matrix, drops pixels with
/// zero mean autocorrelation, re-estimates the shape matrix with Tyler on the
/// survivors and stops when the relative Frobenius change is below epsilon.
/// k_max = 0 returns `init_set` unchanged.
RefineResult refine_sshp(const CMatrix& unit_vectors, std::span<const int> pool, std::span<const int> init_set,
                         const ShapeMatrix& sigma0, std::span<const double> autocorr_means,
                         const RefineOptions& options, const SimplexDraws& draws);

/// Row-major boolean mask over a rows x cols grid.
using Mask = std::vector<std::uint8_t>;

struct ReversalDiagnostics {
  int neighborhood_sum = 0;  // selected pixels in the 3x3 neighbourhood (clipped)
  int n4 = 0;                // selected 4-neighbours of the reference pixel
  bool ref_selected = false;
  bool accepted = false;
};

ReversalDiagnostics reversal_diagnostics(const Mask& mask, int rows, int cols, int ref_index);

/// True when the reference pixel is meaningfully part of the mask:
/// ([ref selected and sum >= 3] or [sum >= 5]) and n4 / sum > 0.2.
bool mask_reversal_check(const Mask& mask, int rows, int cols, int ref_index);

/// 4-connected flood fill from `seed`; empty when the seed is unselected.
Mask connected_component(const Mask& mask, int rows, int cols, int seed);

struct AcafConfig {
  double alpha = 0.05;
  int n_draws = 2000;
  int max_lag = 10;
  double coherence_floor = 0.15;
  int k_max = 10;
  int k_max_refinement = 1;
  double epsilon = 1e-4;
  int aux_window = 5;
  double seed_shrinkage = 0.25;  // multiplier on the plug-in coefficient, see seed_shape
  TylerOptions tyler{};

  void validate() const;
};

struct SSHPMask {
  Mask selected;
  int rows = 0;
  int cols = 0;
  int ref_index = 0;
  int iterations_used = 0;
  int reversals = 0;
  bool fallback_triggered = false;
  bool alignment_ambiguous = false;
  int final_size = 0;
  /// Mean |Gamma| of the Tyler estimate over the final set (0 if undefined).
  double mean_coherence = 0.0;
};

/// Complete SSHP selection for one window: phase alignment and autocorrelation
/// seeding, right-sided refinement, mask-reversal loop, 4-connected cropping
/// with a two-sided refinement pass, and the all-remaining fallback.
SSHPMask select_sshp(const WindowSamples& window, const AcafConfig& config, Rng& rng);

}  // namespace s2s
