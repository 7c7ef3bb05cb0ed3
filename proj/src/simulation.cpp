#include "s2s/simulation.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <boost/math/distributions/inverse_gamma.hpp>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "s2s/cgg.hpp"
#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"
#include "s2s/phase_linking.hpp"

namespace s2s {

CoherenceMatrix exp_coherence_matrix(Index n, double dt, double tau, double p_const) {
  if (n < 1) throw InvalidArgument("exp_coherence_matrix: n must be >= 1");
  if (!(dt > 0.0) || !(tau > 0.0) || !std::isfinite(dt) || !std::isfinite(tau))
    throw InvalidArgument("exp_coherence_matrix: dt and tau must be finite and > 0");
  if (!(p_const >= 0.0 && p_const <= 1.0)) throw InvalidArgument("exp_coherence_matrix: p_const must lie in [0, 1]");
  CMatrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      g(i, j) = p_const + (1.0 - p_const) * std::exp(-std::abs(double(i - j)) * dt / (2.0 * tau));
  // A mixture of a constant and an exponential (Markov) kernel is PSD.
  const double lmin = linalg::eig(g).values(0);
  if (lmin < -1e-10) throw InvariantViolation("exp_coherence_matrix: negative eigenvalue " + std::to_string(lmin));
  return CoherenceMatrix::from_matrix(g);
}

double Deformation::final_phase(int row, int col, int rows, int cols) const {
  const double x = cols > 1 ? 2.0 * col / (cols - 1) - 1.0 : 0.0;
  const double y = rows > 1 ? 2.0 * row / (rows - 1) - 1.0 : 0.0;
  const auto& c = coeffs;
  return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y;
}

void SceneSpec::validate() const {
  std::vector<std::string> bad;
  if (n_acquisitions < 1) bad.push_back("n_acquisitions (" + std::to_string(n_acquisitions) + ") must be >= 1");
  if (rows < 1) bad.push_back("rows must be >= 1");
  if (cols < 1) bad.push_back("cols must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) bad.push_back("dt must be finite and > 0");
  if (classes.empty()) bad.push_back("classes must not be empty");
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& c = classes[k];
    const std::string p = "classes[" + std::to_string(k) + "].";
    if (!(c.tau > 0.0) || !std::isfinite(c.tau)) bad.push_back(p + "tau must be finite and > 0");
    if (!(c.p_const >= 0.0 && c.p_const <= 1.0)) bad.push_back(p + "p_const must lie in [0, 1]");
    if (!(c.xi >= 0.0) || !std::isfinite(c.xi)) bad.push_back(p + "xi must be finite and >= 0");
    if (!(c.sigma2 > 0.0) || !std::isfinite(c.sigma2)) bad.push_back(p + "sigma2 must be finite and > 0");
  }
  if (rows >= 1 && cols >= 1 && labels.size() != std::size_t(rows) * cols) {
    bad.push_back("labels has " + std::to_string(labels.size()) + " entries, raster needs " +
                  std::to_string(std::size_t(rows) * cols));
  } else {
    for (int l : labels)
      if (l < 0 || l >= int(classes.size())) {
        bad.push_back("labels contains class " + std::to_string(l) + " outside [0, " + std::to_string(classes.size()) + ")");
        break;
      }
  }
  for (double c : deformation.coeffs)
    if (!std::isfinite(c)) {
      bad.push_back("deformation coefficients must be finite");
      break;
    }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "invalid scene:";
    for (const auto& b : bad) os << "\n  " << b;
    throw InvalidArgument(os.str());
  }
}

std::array<double, 3> reciprocal_gamma_percentiles(double alpha, double beta) {
  const boost::math::inverse_gamma_distribution<double> d(alpha, beta);
  return {quantile(d, 0.1), quantile(d, 0.5), quantile(d, 0.9)};
}

void check_class_power_constants() {
  const auto q = reciprocal_gamma_percentiles();
  for (std::size_t k = 0; k < q.size(); ++k)
    if (std::abs(q[k] - kClassPower[k]) > 1e-4)
      throw Error("class power constant " + std::to_string(kClassPower[k]) + " disagrees with the inverse CDF (" +
                  std::to_string(q[k]) + ")");
}

std::vector<int> default_label_map(int rows, int cols) {
  std::vector<int> labels(std::size_t(rows) * cols);
  const double cr = 0.5 * (rows - 1);
  const double cc = 0.5 * (cols - 1);
  const double radius = 0.25 * std::min(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      int label = c < cols / 2 ? 0 : 1;
      if (std::hypot(r - cr, c - cc) <= radius) label = 2;
      labels[std::size_t(r) * cols + c] = label;
    }
  return labels;
}

SceneSpec default_scene(bool paper_scale) {
  SceneSpec s;
  s.n_acquisitions = paper_scale ? 30 : 20;
  s.rows = s.cols = paper_scale ? 200 : 100;
  s.classes = {
      {20.0, 0.3, 0.3, kClassPower[0]},
      {1.0, 0.1, 0.6, kClassPower[1]},
      {5.0, 0.2, 0.0, kClassPower[2]},
  };
  s.labels = default_label_map(s.rows, s.cols);
  return s;
}

Scene gen_scene(const SceneSpec& spec) {
  spec.validate();
  const int n = spec.n_acquisitions;
  Scene out;
  out.stack = SlcStack(n, spec.rows, spec.cols);
  out.stack.provenance = "simulated scene, seed " + std::to_string(spec.seed);
  out.truth.phases = Raster(n, spec.rows, spec.cols);
  out.truth.labels = spec.labels;

  std::vector<CMatrix> factors;
  std::vector<MagnitudeLaw> laws;
  for (const auto& c : spec.classes) {
    out.truth.class_coherence.push_back(exp_coherence_matrix(n, spec.dt, c.tau, c.p_const));
    factors.push_back(linalg::hermitian_sqrt(c.sigma2 * out.truth.class_coherence.back().matrix()));
    laws.push_back(KTexture{c.xi});
  }

  tbb::parallel_for(0, spec.rows, [&](int r) {
    CVector w(n);
    for (int c = 0; c < spec.cols; ++c) {
      const int label = spec.labels[std::size_t(r) * spec.cols + c];
      const double final_phase = spec.deformation.final_phase(r, c, spec.rows, spec.cols);
      for (int b = 0; b < n; ++b) {
        const double theta = n > 1 ? wrap_phase(final_phase * double(b) / double(n - 1)) : 0.0;
        out.truth.phases.at(b, r, c) = b == 0 ? 0.0 : theta;
        w(b) = std::polar(1.0, out.truth.phases.at(b, r, c));
      }
      // Gamma o (w w^H) = D Gamma D^H with D = diag(w), so D A is a factor.
      Rng rng = make_stream(spec.seed, std::uint64_t(r), std::uint64_t(c));
      const double radius = sample_magnitude(laws[label], n, rng);
      const CVector z = radius * w.asDiagonal() * (factors[label] * sample_uniform_sphere(n, rng));
      for (int b = 0; b < n; ++b) out.stack.at(b, r, c) = std::complex<float>(float(z(b).real()), float(z(b).imag()));
    }
  });
  return out;
}

RVector rmse_per_acquisition(const Raster& estimated, const Raster& truth, const std::vector<char>* mask) {
  estimated.validate();
  truth.validate();
  if (estimated.bands != truth.bands || estimated.rows != truth.rows || estimated.cols != truth.cols)
    throw InvalidArgument("rmse_per_acquisition: raster dimensions differ");
  if (mask && mask->size() != std::size_t(truth.rows) * truth.cols)
    throw InvalidArgument("rmse_per_acquisition: mask size does not match the raster");
  RVector out = RVector::Zero(truth.bands);
  for (int b = 0; b < truth.bands; ++b) {
    double acc = 0.0;
    std::size_t count = 0;
    for (int r = 0; r < truth.rows; ++r)
      for (int c = 0; c < truth.cols; ++c) {
        if (mask && !(*mask)[std::size_t(r) * truth.cols + c]) continue;
        const double e = wrap_phase(estimated.at(b, r, c) - truth.at(b, r, c));
        acc += e * e;
        ++count;
      }
    if (count == 0) throw InvalidArgument("rmse_per_acquisition: mask selects no pixel");
    out(b) = std::sqrt(acc / double(count));
  }
  return out;
}

// --- test power ---------------------------------------------------------------

void PowerSetup::validate() const {
  if (n_acquisitions < 2) throw InvalidArgument("power: n_acquisitions must be >= 2");
  if (!(dt > 0.0)) throw InvalidArgument("power: dt must be > 0");
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("power: alpha must lie in (0, 0.5)");
  if (n_trials < 1) throw InvalidArgument("power: n_trials must be >= 1");
  if (n_draws < 100) throw InvalidArgument("power: n_draws must be >= 100");
}

std::vector<DecayParams> default_power_grid() {
  std::vector<DecayParams> grid;
  for (double p : {0.1, 0.15, 0.2, 0.25, 0.3})
    for (double tau : {1.0, 2.0, 5.0, 10.0, 20.0}) grid.push_back({tau, p});
  return grid;
}

std::vector<PowerPoint> power_experiment(const DecayParams& ref, const std::vector<DecayParams>& het_grid,
                                         const PowerSetup& setup) {
  setup.validate();
  if (het_grid.empty()) throw InvalidArgument("power: empty heterogeneous grid");
  const Index n = setup.n_acquisitions;
  const CoherenceMatrix g_ref = exp_coherence_matrix(n, setup.dt, ref.tau, ref.p_const);
  const WhitenedTest test(ShapeMatrix::from_scatter(g_ref.matrix()));
  Rng draw_rng = make_stream(setup.seed, 0, 0);
  const SimplexDraws draws(n, setup.n_draws, draw_rng);
  const TestThresholds th = test.thresholds(draws, setup.alpha, setup.sided);

  std::vector<PowerPoint> out(het_grid.size());
  tbb::parallel_for(std::size_t(0), het_grid.size(), [&](std::size_t k) {
    const CoherenceMatrix g_het = exp_coherence_matrix(n, setup.dt, het_grid[k].tau, het_grid[k].p_const);
    const CesSampler sampler(g_het.matrix(), Rayleigh{});
    Rng rng = make_stream(setup.seed, 1, k);
    int rejected = 0;
    for (int t = 0; t < setup.n_trials; ++t) {
      const CVector z = sampler(rng);
      if (!passes(test.statistic(z / z.norm()), th, setup.sided)) ++rejected;
    }
    PowerPoint& p = out[k];
    p.het = het_grid[k];
    p.ref_coherence = g_ref.mean_coherence();
    p.het_coherence = g_het.mean_coherence();
    p.gap = std::abs(p.ref_coherence - p.het_coherence);
    p.power = double(rejected) / setup.n_trials;
    p.trials = setup.n_trials;
  });
  return out;
}

// --- shape parameter grid ------------------------------------------------------

void SGridSetup::validate() const {
  if (n_list.empty() || xi_list.empty()) throw InvalidArgument("sgrid: n_list and xi_list must be non-empty");
  for (Index n : n_list)
    if (n < 1) throw InvalidArgument("sgrid: every N must be >= 1");
  for (double xi : xi_list)
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw InvalidArgument("sgrid: every xi must be finite and >= 0");
  if (samples_per_cell < 2) throw InvalidArgument("sgrid: samples_per_cell must be >= 2");
  if (repeats < 1) throw InvalidArgument("sgrid: repeats must be >= 1");
}

std::vector<SGridCell> s_grid_experiment(const SGridSetup& setup) {
  setup.validate();
  std::vector<SGridCell> cells;
  for (Index n : setup.n_list)
    for (double xi : setup.xi_list) cells.push_back({n, xi, std::vector<double>(std::size_t(setup.repeats)), 0.0});

  const std::size_t jobs = cells.size() * std::size_t(setup.repeats);
  tbb::parallel_for(std::size_t(0), jobs, [&](std::size_t job) {
    const std::size_t k = job / std::size_t(setup.repeats);
    const std::size_t rep = job % std::size_t(setup.repeats);
    SGridCell& cell = cells[k];
    const CoherenceMatrix g = exp_coherence_matrix(cell.n, 1.0, setup.coherence.tau, setup.coherence.p_const);
    Rng rng = make_stream(setup.seed, k, rep);
    const CMatrix samples = CesSampler(g.matrix(), KTexture{cell.xi}).draw(setup.samples_per_cell, rng);
    cell.s_hat[rep] = estimate_cgg(samples).s;
  });
  for (auto& cell : cells) {
    std::vector<double> v = cell.s_hat;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    cell.median_s = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  }
  return cells;
}

}  // namespace s2s
