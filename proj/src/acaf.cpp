#include "s2s/acaf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>

#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"

namespace s2s {

void WindowSamples::validate() const {
  if (rows < 1 || cols < 1) throw InvalidArgument("window: empty geometry");
  if (count() != static_cast<Index>(rows) * cols) {
    throw InvalidArgument("window: sample count " + std::to_string(count()) + " does not match " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (ref_index < 0 || ref_index >= rows * cols) throw InvalidArgument("window: reference index out of range");
  if (dim() < 1) throw InvalidArgument("window: zero-dimensional samples");
  for (Index i = 0; i < count(); ++i) {
    if (!(vectors.col(i).squaredNorm() > 0.0)) throw InvalidArgument("window: zero vector at " + std::to_string(i));
  }
}

AlignmentResult phase_align(const WindowSamples& window, const TylerOptions& tyler) {
  window.validate();
  if (window.dim() < 2) throw InvalidArgument("phase_align: needs N >= 2");
  const TylerFit fit = tyler_fit(window.vectors, tyler);
  const auto e = linalg::eig(fit.shape.matrix());
  const Index n = window.dim();
  AlignmentResult out{window};
  out.ambiguous = (e.values(n - 1) - e.values(n - 2)) < 1e-12;
  // Global phase of the eigenvector is fixed so that the first acquisition is
  // left untouched.
  CVector v_max = e.vectors.col(n - 1);
  if (std::abs(v_max(0)) > 0.0) v_max *= std::polar(1.0, -std::arg(v_max(0)));
  CVector correction(n);
  for (Index k = 0; k < n; ++k) correction(k) = std::polar(1.0, -std::arg(v_max(k)));
  out.aligned.vectors = correction.asDiagonal() * window.vectors;
  return out;
}

AutocorrProfile autocorr_profile(const CVector& z, std::span<const int> lags) {
  const Index n = z.size();
  AutocorrProfile out;
  out.values.reserve(lags.size());
  for (int lag : lags) {
    if (lag < 0 || lag >= n) throw InvalidArgument("autocorr_profile: invalid lag " + std::to_string(lag));
    if (lag == 0) {
      out.values.push_back(1.0);
      continue;
    }
    cdouble acc = 0.0;
    for (Index k = 0; k + lag < n; ++k) acc += z(k) * std::conj(z(k + lag));
    out.values.push_back(std::min(1.0, std::abs(acc)));
  }
  if (!out.values.empty()) {
    out.mean_value = std::accumulate(out.values.begin(), out.values.end(), 0.0) / double(out.values.size());
  }
  return out;
}

std::vector<int> default_lags(Index dim, int max_lag) {
  std::vector<int> lags;
  for (int k = 1; k <= max_lag && k < dim; ++k) lags.push_back(k);
  return lags;
}

double t_statistic(const CVector& z_tilde, const ShapeMatrix& sigma_ref) {
  if (z_tilde.size() != sigma_ref.dim()) {
    throw InvalidArgument("t_statistic: dimension mismatch (" + std::to_string(z_tilde.size()) + " vs " +
                          std::to_string(sigma_ref.dim()) + ")");
  }
  const CMatrix inv = linalg::inverse_hpd(sigma_ref.matrix());
  return (z_tilde.adjoint() * inv * z_tilde)(0, 0).real();
}

double nearest_rank_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::ptrdiff_t>(std::ceil(p * n - 1e-9));
  const auto idx = std::clamp<std::ptrdiff_t>(rank - 1, 0, static_cast<std::ptrdiff_t>(sorted.size()) - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

SimplexDraws::SimplexDraws(Index dim, int n_draws, Rng& rng) : weights_(dim, n_draws) {
  if (dim < 1 || n_draws < 1) throw InvalidArgument("SimplexDraws: dim and n_draws must be >= 1");
  std::exponential_distribution<double> expo(1.0);
  for (int d = 0; d < n_draws; ++d) {
    double total = 0.0;
    for (Index k = 0; k < dim; ++k) total += (weights_(k, d) = expo(rng));
    weights_.col(d) /= total;
  }
}

WhitenedTest::WhitenedTest(const ShapeMatrix& sigma_ref) {
  const auto e = linalg::eig(linalg::load_if_ill_conditioned(sigma_ref.matrix()));
  if (!(e.values.minCoeff() > 0.0)) throw NumericError("whitened test: reference matrix is not positive definite");
  eigenvalues_ = e.values;
  eigenvectors_ = e.vectors;
}

double WhitenedTest::statistic(const CVector& z) const {
  if (z.size() != eigenvalues_.size()) throw InvalidArgument("t statistic: dimension mismatch");
  return (eigenvectors_.adjoint() * z).cwiseAbs2().cwiseQuotient(eigenvalues_).sum();
}

RVector WhitenedTest::statistics(const CMatrix& z) const {
  if (z.rows() != eigenvalues_.size()) throw InvalidArgument("t statistic: dimension mismatch");
  const RMatrix power = (eigenvectors_.adjoint() * z).cwiseAbs2();
  return (eigenvalues_.cwiseInverse().transpose() * power).transpose();
}

std::vector<double> WhitenedTest::null_distribution(const SimplexDraws& draws) const {
  if (draws.dim() != eigenvalues_.size()) throw InvalidArgument("bootstrap: draw dimension mismatch");
  const RVector denom = (eigenvalues_.transpose() * draws.weights()).transpose();
  std::vector<double> t(static_cast<std::size_t>(denom.size()));
  for (Index d = 0; d < denom.size(); ++d) t[static_cast<std::size_t>(d)] = 1.0 / denom(d);
  std::sort(t.begin(), t.end());
  return t;
}

TestThresholds WhitenedTest::thresholds(const SimplexDraws& draws, double alpha, Sidedness sided) const {
  const std::vector<double> t = null_distribution(draws);
  TestThresholds th;
  th.alpha = alpha;
  th.n_draws = draws.size();
  if (sided == Sidedness::right) {
    th.q_high = nearest_rank_quantile(t, 1.0 - alpha);
  } else {
    th.q_low = nearest_rank_quantile(t, 0.5 * alpha);
    th.q_high = nearest_rank_quantile(t, 1.0 - 0.5 * alpha);
  }
  return th;
}

namespace {

void check_bootstrap_args(double alpha, int n_draws) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("bootstrap: alpha must lie in (0, 0.5)");
  if (n_draws < 1000) throw InvalidArgument("bootstrap: n_draws must be >= 1000");
}

}  // namespace

TestThresholds bootstrap_thresholds(const ShapeMatrix& sigma_ref, double alpha, Sidedness sided, int n_draws,
                                    Rng& rng) {
  check_bootstrap_args(alpha, n_draws);
  const SimplexDraws draws(sigma_ref.dim(), n_draws, rng);
  return WhitenedTest(sigma_ref).thresholds(draws, alpha, sided);
}

std::vector<double> bootstrap_null_direct(const ShapeMatrix& sigma_ref, int n_draws, Rng& rng) {
  const CMatrix a = linalg::hermitian_sqrt(sigma_ref.matrix());
  const CMatrix inv = linalg::inverse_hpd(sigma_ref.matrix());
  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(n_draws));
  for (int d = 0; d < n_draws; ++d) {
    CVector z = a * sample_uniform_sphere(sigma_ref.dim(), rng);
    z /= z.norm();
    t.push_back((z.adjoint() * inv * z)(0, 0).real());
  }
  std::sort(t.begin(), t.end());
  return t;
}

bool passes(double t, const TestThresholds& th, Sidedness sided) {
  if (sided == Sidedness::right) return t <= th.q_high;
  return t >= th.q_low.value_or(-std::numeric_limits<double>::infinity()) && t <= th.q_high;
}

namespace {

CMatrix gather(const CMatrix& z, std::span<const int> idx) {
  CMatrix out(z.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = z.col(idx[k]);
  return out;
}

}  // namespace

ShapeMatrix seed_shape(const CMatrix& unit_vectors, std::span<const int> idx, double scale,
                       const TylerOptions& tyler) {
  if (!(scale >= 0.0 && scale <= 1.0)) throw InvalidArgument("seed_shape: scale must lie in [0, 1]");
  const ShapeMatrix raw = tyler_fit(gather(unit_vectors, idx), tyler).shape;
  const double rho = scale * auto_shrinkage_coefficient(raw.matrix(), AutoShrinkage{static_cast<Index>(idx.size())});
  return ShapeMatrix::from_scatter(shrink_to_identity(raw.matrix(), rho));
}

RefineResult refine_sshp(const CMatrix& unit_vectors, std::span<const int> pool, std::span<const int> init_set,
                         const ShapeMatrix& sigma0, std::span<const double> autocorr_means,
                         const RefineOptions& options, const SimplexDraws& draws) {
  if (init_set.empty()) throw InvalidArgument("refine_sshp: empty initial set");
  if (static_cast<Index>(autocorr_means.size()) != unit_vectors.cols()) {
    throw InvalidArgument("refine_sshp: autocorrelation vector does not match the window");
  }
  if (sigma0.dim() != unit_vectors.rows()) throw InvalidArgument("refine_sshp: shape matrix dimension mismatch");
  const Index n = unit_vectors.rows();

  RefineResult out{std::vector<int>(init_set.begin(), init_set.end()), sigma0};
  std::sort(out.selected.begin(), out.selected.end());

  const CMatrix candidates = gather(unit_vectors, pool);
  for (int k = 1; k <= options.k_max; ++k) {
    const WhitenedTest test(out.sigma);
    const TestThresholds th = test.thresholds(draws, options.alpha, options.sided);
    const RVector t = test.statistics(candidates);

    std::vector<int> next;
    for (std::size_t c = 0; c < pool.size(); ++c) {
      const int i = pool[c];
      if (autocorr_means[static_cast<std::size_t>(i)] > 0.0 && passes(t(static_cast<Index>(c)), th, options.sided)) {
        next.push_back(i);
      }
    }
    std::sort(next.begin(), next.end());
    out.iterations = k;
    if (static_cast<Index>(next.size()) < n + 1) {
      out.selected = std::move(next);
      out.small_set = true;
      break;
    }
    // Same set, same fixed point: the estimate cannot move.
    if (next == out.selected && k > 1) break;
    ShapeMatrix updated = tyler_fit(gather(unit_vectors, next), options.tyler).shape;
    const double delta = linalg::relative_frobenius(updated.matrix(), out.sigma.matrix());
    out.selected = std::move(next);
    out.sigma = std::move(updated);
    if (delta < options.epsilon) break;
  }
  return out;
}

ReversalDiagnostics reversal_diagnostics(const Mask& mask, int rows, int cols, int ref_index) {
  if (static_cast<int>(mask.size()) != rows * cols) throw InvalidArgument("mask size does not match the grid");
  if (ref_index < 0 || ref_index >= rows * cols) throw InvalidArgument("reference index outside the grid");
  const int r0 = ref_index / cols;
  const int c0 = ref_index % cols;
  ReversalDiagnostics d;
  d.ref_selected = mask[static_cast<std::size_t>(ref_index)] != 0;
  for (int r = std::max(0, r0 - 1); r <= std::min(rows - 1, r0 + 1); ++r)
    for (int c = std::max(0, c0 - 1); c <= std::min(cols - 1, c0 + 1); ++c) d.neighborhood_sum += mask[r * cols + c] != 0;
  const int dr[] = {-1, 1, 0, 0};
  const int dc[] = {0, 0, -1, 1};
  for (int k = 0; k < 4; ++k) {
    const int r = r0 + dr[k];
    const int c = c0 + dc[k];
    if (r >= 0 && r < rows && c >= 0 && c < cols) d.n4 += mask[r * cols + c] != 0;
  }
  const bool support = (d.ref_selected && d.neighborhood_sum >= 3) || d.neighborhood_sum >= 5;
  d.accepted = support && double(d.n4) / double(d.neighborhood_sum) > 0.2;
  return d;
}

bool mask_reversal_check(const Mask& mask, int rows, int cols, int ref_index) {
  return reversal_diagnostics(mask, rows, cols, ref_index).accepted;
}

Mask connected_component(const Mask& mask, int rows, int cols, int seed) {
  if (static_cast<int>(mask.size()) != rows * cols) throw InvalidArgument("mask size does not match the grid");
  if (seed < 0 || seed >= rows * cols) throw InvalidArgument("seed outside the grid");
  Mask out(mask.size(), 0);
  if (!mask[static_cast<std::size_t>(seed)]) return out;
  std::queue<int> frontier;
  frontier.push(seed);
  out[static_cast<std::size_t>(seed)] = 1;
  while (!frontier.empty()) {
    const int p = frontier.front();
    frontier.pop();
    const int r = p / cols;
    const int c = p % cols;
    const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
    for (const auto& rc : nbr) {
      if (rc[0] < 0 || rc[0] >= rows || rc[1] < 0 || rc[1] >= cols) continue;
      const int q = rc[0] * cols + rc[1];
      if (mask[static_cast<std::size_t>(q)] && !out[static_cast<std::size_t>(q)]) {
        out[static_cast<std::size_t>(q)] = 1;
        frontier.push(q);
      }
    }
  }
  return out;
}

void AcafConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("acaf.alpha must lie in (0, 0.5)");
  if (n_draws < 1000) throw InvalidArgument("acaf.n_draws must be >= 1000");
  if (max_lag < 1) throw InvalidArgument("acaf.max_lag must be >= 1");
  if (!(coherence_floor >= 0.0 && coherence_floor < 1.0)) throw InvalidArgument("acaf.coherence_floor must lie in [0, 1)");
  if (k_max < 0 || k_max_refinement < 0) throw InvalidArgument("acaf.k_max must be >= 0");
  if (!(epsilon > 0.0)) throw InvalidArgument("acaf.epsilon must be > 0");
  if (aux_window < 1) throw InvalidArgument("acaf.aux_window must be >= 1");
  if (!(seed_shrinkage >= 0.0 && seed_shrinkage <= 1.0)) throw InvalidArgument("acaf.seed_shrinkage must lie in [0, 1]");
}

namespace {

std::vector<int> mask_indices(const Mask& m) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) idx.push_back(static_cast<int>(i));
  return idx;
}

Mask indices_to_mask(std::span<const int> idx, std::size_t size) {
  Mask m(size, 0);
  for (int i : idx) m[static_cast<std::size_t>(i)] = 1;
  return m;
}

double set_coherence(const CMatrix& unit_vectors, std::span<const int> idx, const TylerOptions& tyler) {
  if (static_cast<Index>(idx.size()) < unit_vectors.rows() || unit_vectors.rows() < 2) return 0.0;
  return normalize_to_coherence(tyler_fit(gather(unit_vectors, idx), tyler).shape.matrix()).mean_coherence();
}

}  // namespace

SSHPMask select_sshp(const WindowSamples& window, const AcafConfig& config, Rng& rng) {
  window.validate();
  config.validate();
  const Index n = window.dim();
  const Index count = window.count();
  const auto size = static_cast<std::size_t>(count);

  SSHPMask out;
  out.rows = window.rows;
  out.cols = window.cols;
  out.ref_index = window.ref_index;

  auto finish = [&](Mask m) {
    out.selected = std::move(m);
    out.final_size = static_cast<int>(std::count(out.selected.begin(), out.selected.end(), 1));
    return out;
  };

  // Candidate count at or below the N + 1 floor (including N = 1): nothing to test.
  if (count <= n + 1 || n < 2) {
    out.fallback_triggered = true;
    Mask all(size, 1);
    out.mean_coherence = n >= 2 ? set_coherence(window.vectors, mask_indices(all), config.tyler) : 0.0;
    return finish(std::move(all));
  }

  const AlignmentResult aligned = phase_align(window, config.tyler);
  out.alignment_ambiguous = aligned.ambiguous;
  CMatrix unit = aligned.aligned.vectors;
  for (Index i = 0; i < count; ++i) unit.col(i).normalize();

  const std::vector<int> lags = default_lags(n, config.max_lag);
  std::vector<double> rbar(size);
  for (Index i = 0; i < count; ++i) rbar[static_cast<std::size_t>(i)] = autocorr_profile(unit.col(i), lags).mean_value;

  const SimplexDraws draws(n, config.n_draws, rng);
  const RefineOptions one_sided{Sidedness::right, config.alpha, config.k_max, config.epsilon, config.tyler};

  auto fallback = [&](const std::vector<int>& remaining) {
    out.fallback_triggered = true;
    out.mean_coherence = set_coherence(unit, remaining, config.tyler);
    return finish(indices_to_mask(remaining, size));
  };

  RefineResult accepted{{}, ShapeMatrix::from_scatter(CMatrix::Identity(n, n))};
  for (;;) {
    std::vector<int> remaining;
    for (std::size_t i = 0; i < size; ++i)
      if (rbar[i] > 0.0) remaining.push_back(static_cast<int>(i));
    if (static_cast<Index>(remaining.size()) < n + 1) return fallback(remaining);

    std::vector<int> seed = remaining;
    std::stable_sort(seed.begin(), seed.end(), [&](int a, int b) { return rbar[std::size_t(a)] > rbar[std::size_t(b)]; });
    seed.resize(static_cast<std::size_t>(n + 1));
    const ShapeMatrix sigma0 = seed_shape(unit, seed, config.seed_shrinkage, config.tyler);

    RefineResult res = refine_sshp(unit, remaining, seed, sigma0, rbar, one_sided, draws);
    out.iterations_used += res.iterations;
    if (res.small_set) return fallback(remaining);
    if (normalize_to_coherence(res.sigma.matrix()).mean_coherence() < config.coherence_floor) return fallback(remaining);

    const Mask mask = indices_to_mask(res.selected, size);
    if (mask_reversal_check(mask, window.rows, window.cols, window.ref_index)) {
      accepted = std::move(res);
      break;
    }
    ++out.reversals;
    for (int i : res.selected) rbar[static_cast<std::size_t>(i)] = 0.0;
  }

  // The reversal check deems the reference pixel part of the mask.
  Mask mask = indices_to_mask(accepted.selected, size);
  mask[static_cast<std::size_t>(window.ref_index)] = 1;
  ShapeMatrix final_sigma = accepted.sigma;

  if (out.reversals == 0) {
    Mask region = connected_component(mask, window.rows, window.cols, window.ref_index);
    if (std::count(region.begin(), region.end(), 1) < n + 1) {
      const int half = std::min({config.aux_window, window.rows, window.cols}) / 2;
      const int r0 = window.ref_index / window.cols;
      const int c0 = window.ref_index % window.cols;
      for (int r = std::max(0, r0 - half); r <= std::min(window.rows - 1, r0 + half); ++r)
        for (int c = std::max(0, c0 - half); c <= std::min(window.cols - 1, c0 + half); ++c)
          region[static_cast<std::size_t>(r * window.cols + c)] = 1;
    }
    const std::vector<int> members = mask_indices(region);
    mask = region;
    if (static_cast<Index>(members.size()) >= n + 1 && config.k_max_refinement > 0) {
      const ShapeMatrix sigma0 = seed_shape(unit, members, config.seed_shrinkage, config.tyler);
      const RefineOptions two_sided{Sidedness::two, config.alpha, config.k_max_refinement, config.epsilon, config.tyler};
      RefineResult res = refine_sshp(unit, members, members, sigma0, rbar, two_sided, draws);
      out.iterations_used += res.iterations;
      if (!res.small_set) {
        mask = indices_to_mask(res.selected, size);
        mask[static_cast<std::size_t>(window.ref_index)] = 1;
        final_sigma = res.sigma;
      }
    }
  }
  out.mean_coherence = normalize_to_coherence(final_sigma.matrix()).mean_coherence();
  return finish(std::move(mask));
}

}  // namespace s2s
