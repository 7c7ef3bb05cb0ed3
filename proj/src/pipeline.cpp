#include "s2s/pipeline.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include "s2s/ces.hpp"
#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"

namespace s2s {

Estimator parse_estimator(const std::string& name) {
  if (name == "cgg") return Estimator::cgg;
  if (name == "tyler") return Estimator::tyler;
  if (name == "regscm") return Estimator::regscm;
  throw InvalidArgument("unknown estimator '" + name + "' (expected cgg, tyler or regscm)");
}

Linker parse_linker(const std::string& name) {
  if (name == "cgg-mle" || name == "mle") return Linker::cgg_mle;
  if (name == "cfpl") return Linker::cfpl;
  if (name == "pta") return Linker::pta;
  throw InvalidArgument("unknown phase-linking method '" + name + "' (expected cgg-mle, cfpl or pta)");
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::cgg: return "cgg";
    case Estimator::tyler: return "tyler";
    case Estimator::regscm: return "regscm";
  }
  return "?";
}

std::string to_string(Linker l) {
  switch (l) {
    case Linker::cgg_mle: return "mle";
    case Linker::cfpl: return "cfpl";
    case Linker::pta: return "pta";
  }
  return "?";
}

std::string Variant::name() const { return to_string(estimator) + "-" + to_string(linker); }

Variant parse_variant(const std::string& name) {
  if (name == "cgg-mle") return {Estimator::cgg, Linker::cgg_mle};
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw InvalidArgument("method '" + name + "' must look like <estimator>-<linker>");
  return {parse_estimator(name.substr(0, dash)), parse_linker(name.substr(dash + 1))};
}

void PipelineConfig::validate() const {
  if (window < 1 || window % 2 == 0) throw InvalidArgument("window must be odd and >= 1, got " + std::to_string(window));
  if (variants.empty()) throw InvalidArgument("at least one method is required");
  for (std::size_t i = 0; i < variants.size(); ++i)
    for (std::size_t j = i + 1; j < variants.size(); ++j)
      if (variants[i] == variants[j]) throw InvalidArgument("method " + variants[i].name() + " listed twice");
  if (threads < 0) throw InvalidArgument("threads must be >= 0");
  if (tile_rows < 1) throw InvalidArgument("tile_rows must be >= 1");
  if (shrinkage && !(*shrinkage >= 0.0 && *shrinkage <= 1.0)) throw InvalidArgument("shrinkage must lie in [0, 1]");
  acaf.validate();
  cgg.validate();
  if (!(mle.gradient_tolerance > 0.0) || mle.max_iterations < 1 || mle.lbfgs_memory < 1)
    throw InvalidArgument("phase_linking.mle: tolerance > 0, max_iterations >= 1 and lbfgs_memory >= 1 required");
  if (!(mm.rel_tolerance > 0.0) || !(mm.phase_tolerance > 0.0) || mm.max_iterations < 1)
    throw InvalidArgument("phase_linking.mm: tolerances > 0 and max_iterations >= 1 required");
}

WindowSamples extract_window(const SlcStack& stack, int row, int col, int window) {
  if (row < 0 || row >= stack.rows || col < 0 || col >= stack.cols) throw InvalidArgument("extract_window: pixel outside the raster");
  const int h = window / 2;
  const int r0 = std::max(0, row - h), r1 = std::min(stack.rows - 1, row + h);
  const int c0 = std::max(0, col - h), c1 = std::min(stack.cols - 1, col + h);
  WindowSamples w;
  w.rows = r1 - r0 + 1;
  w.cols = c1 - c0 + 1;
  w.ref_index = (row - r0) * w.cols + (col - c0);
  w.vectors.resize(stack.n_acquisitions, Index(w.rows) * w.cols);
  for (int b = 0; b < stack.n_acquisitions; ++b)
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const auto& x = stack.at(b, r, c);
        w.vectors(b, Index(r - r0) * w.cols + (c - c0)) = cdouble(x.real(), x.imag());
      }
  return w;
}

namespace {

CMatrix regularize(const CMatrix& m, Index sample_count, double kurtosis, const std::optional<double>& fixed) {
  const CMatrix h = linalg::hermitian_part(m);
  if (fixed) return shrink_to_identity(h, *fixed);
  return shrink_to_identity(h, AutoShrinkage{sample_count, kurtosis});
}

CoherenceEstimate regscm_estimate(const CMatrix& samples, const std::optional<double>& fixed) {
  const double kappa = samples.cols() >= 2 ? elliptical_kurtosis(samples) : 1.0;
  CoherenceEstimate e{CoherenceMatrix::from_matrix(CMatrix::Identity(samples.rows(), samples.rows())), {}, 1.0, 0};
  e.scatter = regularize(linalg::sample_covariance(samples), samples.cols(), std::isfinite(kappa) ? kappa : 1.0, fixed);
  e.gamma = normalize_to_coherence(e.scatter);
  return e;
}

}  // namespace

CoherenceEstimate estimate_coherence(const CMatrix& samples, Estimator estimator, const PipelineConfig& config) {
  const Index n = samples.rows();
  const Index k = samples.cols();
  if (n < 1 || k < 1) throw InvalidArgument("estimate_coherence: empty sample set");
  try {
    switch (estimator) {
      case Estimator::regscm:
        return regscm_estimate(samples, config.shrinkage);
      case Estimator::tyler: {
        if (k < 2) throw InvalidArgument("tyler needs at least 2 samples");
        const TylerFit fit = tyler_fit(samples, config.acaf.tyler);
        CoherenceEstimate e{CoherenceMatrix::from_matrix(CMatrix::Identity(n, n)), {}, 1.0, 0};
        if (!fit.converged) e.flags |= kNotConverged;
        e.scatter = regularize(fit.shape.matrix(), k, 1.0, config.shrinkage);
        e.gamma = normalize_to_coherence(e.scatter);
        return e;
      }
      case Estimator::cgg: {
        if (k < 2) throw InvalidArgument("cgg needs at least 2 samples");
        const CggFit fit = estimate_cgg(samples, config.cgg);
        CoherenceEstimate e{CoherenceMatrix::from_matrix(CMatrix::Identity(n, n)), {}, fit.s, 0};
        if (!fit.converged) e.flags |= kNotConverged;
        if (fit.s_at_bound) e.flags |= kShapeAtBound;
        e.scatter = regularize(fit.scatter, k, 1.0, config.shrinkage);
        e.gamma = normalize_to_coherence(e.scatter);
        return e;
      }
    }
  } catch (const Error&) {
    CoherenceEstimate e = regscm_estimate(samples, config.shrinkage);
    e.flags |= kEstimatorFailed;
    return e;
  }
  throw InvalidArgument("estimate_coherence: unknown estimator");
}

PhaseLinkResult link_phases(const CMatrix& samples, const CoherenceEstimate& est, Linker linker,
                            const PipelineConfig& config) {
  switch (linker) {
    case Linker::cfpl:
      return cfpl_phases(est.gamma, config.mm);
    case Linker::pta:
      return pta_phases(est.gamma, config.mm);
    case Linker::cgg_mle: {
      // Per-acquisition power removed so the samples match the coherence scale.
      const RVector d = est.scatter.diagonal().real().cwiseSqrt().cwiseInverse();
      const CMatrix x = d.asDiagonal() * samples;
      return cgg_mle_phases(x, est.gamma.magnitudes(), est.s, eigenvector_phases(est.gamma.matrix()), config.mle);
    }
  }
  throw InvalidArgument("link_phases: unknown linker");
}

namespace {

void process_pixel(const SlcStack& stack, const PipelineConfig& config, Stage last, int row, int col, ProductSet& out) {
  const int n = stack.n_acquisitions;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const WindowSamples window = extract_window(stack, row, col, config.window);

  std::uint32_t common = 0;
  CMatrix samples;
  try {
    Rng rng = make_stream(config.seed, std::uint64_t(row), std::uint64_t(col));
    const SSHPMask mask = select_sshp(window, config.acaf, rng);
    if (mask.fallback_triggered) common |= kFallback;
    if (mask.alignment_ambiguous) common |= kAlignmentAmbiguous;
    out.acaf_coherence.at(0, row, col) = mask.mean_coherence;
    samples.resize(n, mask.final_size);
    Index k = 0;
    for (std::size_t i = 0; i < mask.selected.size(); ++i)
      if (mask.selected[i]) samples.col(k++) = window.vectors.col(Index(i));
  } catch (const Error&) {
    common |= kSelectionFailed;
    samples = window.vectors.col(window.ref_index);
  }
  out.sshp_count.at(0, row, col) = double(samples.cols());
  if (last == Stage::select) return;

  const CVector center = window.vectors.col(window.ref_index);
  const bool center_ok = (center.array() != cdouble(0.0)).all() && n >= 2;

  std::map<Estimator, CoherenceEstimate> cache;
  for (auto& vp : out.variants) {
    std::uint32_t flags = common;
    auto it = cache.find(vp.variant.estimator);
    if (it == cache.end()) it = cache.emplace(vp.variant.estimator, estimate_coherence(samples, vp.variant.estimator, config)).first;
    const CoherenceEstimate& est = it->second;
    flags |= est.flags;
    if (vp.variant.estimator == Estimator::cgg) out.s_map.at(0, row, col) = est.s;
    vp.mean_coherence.at(0, row, col) = est.gamma.mean_coherence();
    if (last == Stage::estimate) {
      vp.diagnostics.at(0, row, col) = double(flags);
      continue;
    }

    try {
      const PhaseLinkResult res = link_phases(samples, est, vp.variant.linker, config);
      if (!res.converged) flags |= kNotConverged;
      if (!res.informative) flags |= kNonInformative;
      if (res.magnitude_shrinkage > 0.0) flags |= kMagnitudeShrunk;
      for (int b = 0; b < n; ++b) vp.phases.at(b, row, col) = res.theta(b);
      if (center_ok) {
        vp.phase_stat.at(0, row, col) = phase_stat(center, res.theta);
      } else {
        flags |= kPhaseStatUndefined;
        vp.phase_stat.at(0, row, col) = nan;
      }
    } catch (const Error&) {
      flags |= kLinkerFailed;
      for (int b = 0; b < n; ++b) vp.phases.at(b, row, col) = nan;
      vp.phase_stat.at(0, row, col) = nan;
    }
    vp.diagnostics.at(0, row, col) = double(flags);
  }
}

}  // namespace

ProductSet run_pipeline(const SlcStack& stack, const PipelineConfig& config, Stage last) {
  stack.validate();
  config.validate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ProductSet out;
  out.sshp_count = Raster(1, stack.rows, stack.cols);
  out.acaf_coherence = Raster(1, stack.rows, stack.cols, nan);
  out.s_map = Raster(1, stack.rows, stack.cols, nan);
  if (last != Stage::select) {
    const int bands = last == Stage::link ? stack.n_acquisitions : 0;
    for (const Variant& v : config.variants) {
      out.variants.push_back({v, Raster(bands, stack.rows, stack.cols), Raster(1, stack.rows, stack.cols, nan),
                              Raster(1, stack.rows, stack.cols), Raster(1, stack.rows, stack.cols)});
    }
  }

  // Every pixel writes only its own output cells and draws from its own
  // stream, so the result does not depend on scheduling.
  const int tiles = (stack.rows + config.tile_rows - 1) / config.tile_rows;
  auto body = [&] {
    tbb::parallel_for(tbb::blocked_range<int>(0, tiles, 1), [&](const tbb::blocked_range<int>& range) {
      for (int t = range.begin(); t < range.end(); ++t) {
        const int r1 = std::min(stack.rows, (t + 1) * config.tile_rows);
        for (int r = t * config.tile_rows; r < r1; ++r)
          for (int c = 0; c < stack.cols; ++c) process_pixel(stack, config, last, r, c, out);
      }
    });
  };
  if (config.threads > 0) {
    tbb::task_arena arena(config.threads);
    arena.execute(body);
  } else {
    body();
  }
  return out;
}

}  // namespace s2s
