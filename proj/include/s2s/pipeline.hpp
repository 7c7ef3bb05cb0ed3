#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s2s/acaf.hpp"
#include "s2s/cgg.hpp"
#include "s2s/phase_linking.hpp"
#include "s2s/raster.hpp"

// Sliding-window processing of a stack: ACAF selection, coherence estimation
// and phase linking per pixel.
namespace s2s {

enum class Estimator { cgg, tyler, regscm };
enum class Linker { cgg_mle, cfpl, pta };

Estimator parse_estimator(const std::string& name);
Linker parse_linker(const std::string& name);
std::string to_string(Estimator e);
std::string to_string(Linker l);

/// One estimator / linker pairing, e.g. CGG-MLE = {cgg, cgg_mle},
/// RegSCM-CFPL = {regscm, cfpl}, RegPTA = {regscm, pta}.
struct Variant {
  Estimator estimator = Estimator::cgg;
  Linker linker = Linker::cfpl;

  std::string name() const;  // e.g. "cgg-cfpl"
  bool operator==(const Variant&) const = default;
};

/// Parses "cgg-mle" (the CGG estimator with its own linker), or
/// "<estimator>-<linker>" such as "cgg-cfpl", "tyler-cfpl", "regscm-cfpl",
/// "regscm-pta".
Variant parse_variant(const std::string& name);

struct PipelineConfig {
  int window = 11;  // odd side length
  std::vector<Variant> variants{{Estimator::cgg, Linker::cfpl}};
  AcafConfig acaf{};
  CggOptions cgg{};
  MleOptions mle{};
  MmOptions mm{};
  std::optional<double> shrinkage;  // fixed coefficient in [0, 1]; empty: plug-in
  std::uint64_t seed = 1;
  int threads = 0;  // 0: library default
  int tile_rows = 8;

  void validate() const;
};

// Per-pixel diagnostic bits.
enum DiagnosticFlag : std::uint32_t {
  kFallback = 1u << 0,            // ACAF fell back to all remaining pixels
  kAlignmentAmbiguous = 1u << 1,  // repeated leading eigenvalue in phase alignment
  kSelectionFailed = 1u << 2,     // window unusable (e.g. zero vector); reference pixel only
  kEstimatorFailed = 1u << 3,     // estimator threw; regularized SCM used instead
  kLinkerFailed = 1u << 4,        // linker threw; phases are NaN
  kNotConverged = 1u << 5,        // an iterative estimator or linker hit its cap
  kShapeAtBound = 1u << 6,        // CGG s at the search interval boundary
  kMagnitudeShrunk = 1u << 7,     // |Gamma| needed extra shrinkage to invert
  kNonInformative = 1u << 8,      // no off-diagonal coherence
  kPhaseStatUndefined = 1u << 9,  // zero entry in the pixel vector
};

struct VariantProducts {
  Variant variant;
  Raster phases;           // N bands
  Raster phase_stat;       // 1 band
  Raster mean_coherence;   // 1 band, from this variant's coherence estimate
  Raster diagnostics;      // 1 band, DiagnosticFlag bits
};

struct ProductSet {
  Raster sshp_count;      // 1 band
  Raster acaf_coherence;  // 1 band, mean |Gamma| of the selection's Tyler estimate
  Raster s_map;       // 1 band, NaN where no CGG estimator ran
  std::vector<VariantProducts> variants;  // empty after Stage::select
};

/// Where run_pipeline stops. After `estimate` the phase rasters have zero
/// bands and phase_stat is NaN.
enum class Stage { select, estimate, link };

/// Regularized coherence estimate from selected samples (columns). Every
/// estimate is shrunk toward the identity with the plug-in coefficient and
/// then normalized to unit diagonal. `s` receives the CGG shape (1 for the
/// other estimators); `flags` receives estimator diagnostic bits.
struct CoherenceEstimate {
  CoherenceMatrix gamma;
  CMatrix scatter;  // regularized, before normalization
  double s = 1.0;
  std::uint32_t flags = 0;
};
CoherenceEstimate estimate_coherence(const CMatrix& samples, Estimator estimator, const PipelineConfig& config);

/// Phases for one pixel from its selected samples and coherence estimate.
PhaseLinkResult link_phases(const CMatrix& samples, const CoherenceEstimate& est, Linker linker,
                            const PipelineConfig& config);

/// Window of the pixel (row, col) clipped to the raster.
WindowSamples extract_window(const SlcStack& stack, int row, int col, int window);

ProductSet run_pipeline(const SlcStack& stack, const PipelineConfig& config, Stage last = Stage::link);

}  // namespace s2s
