#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "s2s/acaf.hpp"
#include "s2s/ces.hpp"
#include "s2s/raster.hpp"
#include "s2s/types.hpp"

// Synthetic stacks and the simulation experiments: exponential temporal
// decorrelation, the three-class scene, test power and the s grid.
namespace s2s {

/// Gamma_ij = p + (1 - p) exp(-|i - j| dt / (2 tau)). Real, unit diagonal.
CoherenceMatrix exp_coherence_matrix(Index n, double dt, double tau, double p_const);

struct ScattererClass {
  double tau = 1.0;
  double p_const = 0.1;
  double xi = 0.0;      // variance of the unit-mean Gamma texture
  double sigma2 = 1.0;  // mean backscatter power
};

/// Phase at the last acquisition as a quadratic polynomial of the normalized
/// pixel coordinates x, y in [-1, 1] (x along columns):
/// c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2. Acquisition n gets the
/// fraction n / (N - 1) of it, so acquisition 0 is the zero reference.
struct Deformation {
  std::array<double, 6> coeffs{0.0, 2.0, 1.0, -3.0, 0.0, -3.0};

  double final_phase(int row, int col, int rows, int cols) const;
};

struct SceneSpec {
  int n_acquisitions = 20;
  int rows = 100;
  int cols = 100;
  double dt = 1.0;
  std::vector<ScattererClass> classes;
  std::vector<int> labels;  // row-major class index per pixel
  Deformation deformation{};
  std::uint64_t seed = 1;

  /// Throws InvalidArgument listing every offending field.
  void validate() const;
};

/// Reciprocal-Gamma(alpha = 2, beta = 1) 10th, 50th and 90th percentiles used
/// as class powers.
inline constexpr std::array<double, 3> kClassPower{0.2571, 0.5958, 1.8804};

/// The same percentiles recomputed from the inverse CDF.
std::array<double, 3> reciprocal_gamma_percentiles(double alpha = 2.0, double beta = 1.0);

/// Throws Error if kClassPower disagrees with the recomputed percentiles
/// beyond the rounding of the constants.
void check_class_power_constants();

/// Two half-planes (left class 0, right class 1) and a centred disk
/// (class 2) of radius min(rows, cols) / 4.
std::vector<int> default_label_map(int rows, int cols);

/// Desk scale: N = 20 on 100 x 100. Paper scale: N = 30 on 200 x 200.
SceneSpec default_scene(bool paper_scale = false);

struct GroundTruth {
  std::vector<CoherenceMatrix> class_coherence;
  Raster phases;  // N bands, radians, band 0 identically 0
  std::vector<int> labels;
};

struct Scene {
  SlcStack stack;
  GroundTruth truth;
};

/// Per pixel: Sigma = sigma2 Gamma o (w w^H) with w = exp(j theta(pixel)),
/// z = R A u with K-textured R (compound Gaussian, E[z z^H] = Sigma). Each
/// pixel draws from its own stream (seed, row, col); output is bit-identical
/// for any thread count.
Scene gen_scene(const SceneSpec& spec);

/// Wrapped per-acquisition RMSE sqrt(mean_pixels wrap(est - truth)^2). An
/// optional row-major mask restricts the pixels.
RVector rmse_per_acquisition(const Raster& estimated, const Raster& truth, const std::vector<char>* mask = nullptr);

// --- test power ---------------------------------------------------------------

struct DecayParams {
  double tau = 1.0;
  double p_const = 0.1;
};

struct PowerPoint {
  DecayParams het;
  double ref_coherence = 0.0;
  double het_coherence = 0.0;
  double gap = 0.0;  // |mean coherence(ref) - mean coherence(het)|
  double power = 0.0;
  int trials = 0;
};

struct PowerSetup {
  Index n_acquisitions = 20;
  double dt = 1.0;
  double alpha = 0.05;
  Sidedness sided = Sidedness::right;
  int n_trials = 2000;
  int n_draws = 10000;  // bootstrap draws for the thresholds
  std::uint64_t seed = 1;

  void validate() const;
};

/// The p_const x tau grid {0.1, 0.15, ..., 0.3} x {1, 2, 5, 10, 20}.
std::vector<DecayParams> default_power_grid();

/// For every heterogeneous parameter pair: fraction of CACG(Gamma_het) draws
/// rejected by the test calibrated on the true Gamma_ref shape matrix.
std::vector<PowerPoint> power_experiment(const DecayParams& ref, const std::vector<DecayParams>& het_grid,
                                         const PowerSetup& setup);

// --- shape parameter grid ------------------------------------------------------

struct SGridCell {
  Index n = 0;
  double xi = 0.0;
  std::vector<double> s_hat;  // one per repeat
  double median_s = 0.0;
};

struct SGridSetup {
  std::vector<Index> n_list{5, 10, 20, 30};
  std::vector<double> xi_list{0.0, 0.3, 0.6};
  Index samples_per_cell = 10000;
  int repeats = 20;
  DecayParams coherence{5.0, 0.2};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Joint CGG fit of s on K-textured samples with scatter exp_coherence_matrix.
std::vector<SGridCell> s_grid_experiment(const SGridSetup& setup);

}  // namespace s2s
