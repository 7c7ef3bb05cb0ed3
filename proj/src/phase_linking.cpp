#include "s2s/phase_linking.hpp"

#include <ceres/ceres.h>

#include <cmath>
#include <functional>
#include <mutex>
#include <numbers>
#include <string>

#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"

namespace s2s {

double wrap_phase(double x) {
  double r = std::remainder(x, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

RVector realign_reference(const RVector& theta) {
  RVector out(theta.size());
  for (Index k = 0; k < theta.size(); ++k) out(k) = wrap_phase(theta(k) - theta(0));
  if (out.size() > 0) out(0) = 0.0;
  return out;
}

double phase_stat(const CVector& z, const RVector& theta) {
  const Index n = z.size();
  if (n < 2) throw InvalidArgument("phase_stat: needs N >= 2");
  if (theta.size() != n) throw InvalidArgument("phase_stat: dimension mismatch");
  for (Index k = 0; k < n; ++k)
    if (z(k) == cdouble(0.0)) throw InvalidArgument("phase_stat: zero entry at acquisition " + std::to_string(k));
  double acc = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) acc += std::cos(theta(i) - theta(j) - std::arg(z(i) * std::conj(z(j))));
  return 2.0 * acc / (double(n) * double(n - 1));
}

RVector eigenvector_phases(const CMatrix& gamma) {
  const auto e = linalg::eig(gamma);
  const CVector v = e.vectors.col(gamma.rows() - 1);
  RVector theta(v.size());
  for (Index k = 0; k < v.size(); ++k) theta(k) = std::arg(v(k));
  return realign_reference(theta);
}

MagnitudeInverse regularized_magnitude_inverse(const RMatrix& g) {
  if (g.rows() != g.cols() || g.rows() < 1) throw InvalidArgument("magnitude matrix must be square and non-empty");
  const Index n = g.rows();
  const RMatrix sym = 0.5 * (g + g.transpose());
  static constexpr double kLadder[] = {0.0, 1e-3, 1e-2, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  for (double rho : kLadder) {
    const RMatrix gr = (1.0 - rho) * sym + rho * RMatrix::Identity(n, n);
    const Eigen::SelfAdjointEigenSolver<RMatrix> es(gr);
    if (es.eigenvalues().minCoeff() > 1e-8 * std::max(1.0, es.eigenvalues().maxCoeff())) {
      const CMatrix inv = linalg::inverse_hpd(gr.cast<cdouble>());
      return {inv.real(), rho};
    }
  }
  throw NumericError("magnitude matrix is not invertible after regularization");
}

// --- CGG-MLE ---------------------------------------------------------------

double cgg_mle_objective(const CMatrix& samples, const RMatrix& m, double s, const RVector& theta, RVector* gradient) {
  const Index n = samples.rows();
  if (theta.size() != n || m.rows() != n || m.cols() != n) throw InvalidArgument("cgg_mle_objective: dimension mismatch");
  if (!(s > 0.0)) throw InvalidArgument("cgg_mle_objective: s must be > 0");
  CVector rot(n);
  for (Index k = 0; k < n; ++k) rot(k) = std::polar(1.0, -theta(k));
  const CMatrix x = rot.asDiagonal() * samples;
  const CMatrix mx = m.cast<cdouble>() * x;
  const Index l = samples.cols();
  double f = 0.0;
  if (gradient) gradient->setZero(n);
  for (Index i = 0; i < l; ++i) {
    const double q = std::max(x.col(i).dot(mx.col(i)).real(), 0.0);
    f += std::pow(q, s);
    if (gradient && q > 0.0) {
      const double w = s * std::pow(q, s - 1.0);
      for (Index k = 0; k < n; ++k) (*gradient)(k) += w * -2.0 * (std::conj(x(k, i)) * mx(k, i)).imag();
    }
  }
  if (gradient) *gradient /= double(l);
  return f / double(l);
}

namespace {

// The line search logs benign warnings ("constant polynomial") through glog.
void quiet_ceres() {
  static std::once_flag once;
  std::call_once(once, [] { FLAGS_minloglevel = 2; });
}

// Minimizes log f: same minimizer, and the gradient grad f / f is
// dimensionless at every scale, including near an optimum far below f(init).
class MleCost final : public ceres::FirstOrderFunction {
 public:
  MleCost(const CMatrix& samples, const RMatrix& m, double s) : samples_(samples), m_(m), s_(s) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const Index n = samples_.rows();
    RVector theta(n);
    theta(0) = 0.0;
    for (Index k = 1; k < n; ++k) theta(k) = parameters[k - 1];
    RVector g;
    const double f = cgg_mle_objective(samples_, m_, s_, theta, gradient ? &g : nullptr);
    if (!std::isfinite(f) || !(f > 0.0)) return false;
    *cost = std::log(f);
    if (gradient)
      for (Index k = 1; k < n; ++k) gradient[k - 1] = g(k) / f;
    return true;
  }

  int NumParameters() const override { return static_cast<int>(samples_.rows()) - 1; }

 private:
  const CMatrix& samples_;
  const RMatrix& m_;
  double s_;
};

}  // namespace

PhaseLinkResult cgg_mle_phases(const CMatrix& samples, const RMatrix& g, double s, const RVector& init,
                               const MleOptions& options) {
  const Index n = samples.rows();
  if (n < 1 || samples.cols() < 1) throw InvalidArgument("cgg_mle_phases: empty samples");
  if (g.rows() != n || init.size() != n) throw InvalidArgument("cgg_mle_phases: dimension mismatch");
  if (!(s > 0.0)) throw InvalidArgument("cgg_mle_phases: s must be > 0");
  const MagnitudeInverse mi = regularized_magnitude_inverse(g);

  PhaseLinkResult out;
  out.magnitude_shrinkage = mi.shrinkage;
  const RVector start = realign_reference(init);
  if (n == 1) {
    out.theta = RVector::Zero(1);
    out.converged = true;
    out.objective = cgg_mle_objective(samples, mi.inverse, s, out.theta);
    return out;
  }
  const double f0 = cgg_mle_objective(samples, mi.inverse, s, start);
  if (!(f0 > 0.0) || !std::isfinite(f0)) throw NumericError("cgg_mle_phases: degenerate objective at the initial point");

  std::vector<double> params(start.data() + 1, start.data() + n);
  ceres::GradientProblem problem(new MleCost(samples, mi.inverse, s));
  quiet_ceres();
  ceres::GradientProblemSolver::Options opts;
  opts.line_search_direction_type = ceres::LBFGS;
  opts.line_search_type = ceres::WOLFE;
  opts.max_lbfgs_rank = options.lbfgs_memory;
  opts.max_num_iterations = options.max_iterations;
  opts.gradient_tolerance = 1e-3 * options.gradient_tolerance;
  opts.function_tolerance = 0.0;
  opts.parameter_tolerance = 0.0;
  opts.logging_type = ceres::SILENT;
  opts.minimizer_progress_to_stdout = false;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(opts, problem, params.data(), &summary);

  RVector theta(n);
  theta(0) = 0.0;
  for (Index k = 1; k < n; ++k) theta(k) = params[static_cast<std::size_t>(k - 1)];
  RVector grad;
  out.objective = cgg_mle_objective(samples, mi.inverse, s, theta, &grad);
  out.gradient_norm = grad.tail(n - 1).cwiseAbs().maxCoeff() / out.objective;
  out.iterations = static_cast<int>(summary.iterations.size());
  out.converged = summary.IsSolutionUsable() && out.gradient_norm < options.gradient_tolerance;
  out.theta = realign_reference(theta);
  return out;
}

// --- MM solvers --------------------------------------------------------------

namespace {

CVector unit_phasors(const RVector& theta) {
  CVector w(theta.size());
  for (Index k = 0; k < theta.size(); ++k) w(k) = std::polar(1.0, theta(k));
  return w;
}

RVector phases_of(const CVector& w) {
  RVector t(w.size());
  for (Index k = 0; k < w.size(); ++k) t(k) = std::arg(w(k));
  return t;
}

bool has_off_diagonal(const CMatrix& gamma) {
  for (Index i = 0; i < gamma.rows(); ++i)
    for (Index j = i + 1; j < gamma.cols(); ++j)
      if (std::abs(gamma(i, j)) > 1e-12) return true;
  return false;
}

// Maximizes w^H C w over unit-modulus w for PSD C: w <- exp(j arg(C w)).
// `objective` is the quantity being minimized; it must decrease as w^H C w grows.
PhaseLinkResult run_mm(const CMatrix& c, CVector w, const std::function<double(const CVector&)>& objective,
                       const MmOptions& options, const char* name) {
  PhaseLinkResult out;
  double f = objective(w);
  out.objective_trace.push_back(f);
  for (int it = 1; it <= options.max_iterations; ++it) {
    const CVector cw = c * w;
    CVector next = w;
    for (Index k = 0; k < w.size(); ++k)
      if (std::abs(cw(k)) > 0.0) next(k) = cw(k) / std::abs(cw(k));
    const double fn = objective(next);
    const double scale = std::max(std::abs(f), 1.0);
    if (fn > f + 1e-10 * scale) {
      throw InvariantViolation(std::string(name) + ": MM step increased the objective from " + std::to_string(f) +
                               " to " + std::to_string(fn));
    }
    out.objective_trace.push_back(fn);
    out.iterations = it;
    const double change = std::abs(f - fn) / scale;
    double step = 0.0;
    for (Index k = 0; k < w.size(); ++k) step = std::max(step, std::abs(std::arg(next(k) * std::conj(w(k)))));
    w = next;
    f = fn;
    if (change < options.rel_tolerance && step < options.phase_tolerance) {
      out.converged = true;
      break;
    }
  }
  out.objective = f;
  out.theta = realign_reference(phases_of(w));
  return out;
}

void check_mm_options(const MmOptions& o) {
  if (!(o.rel_tolerance > 0.0) || !(o.phase_tolerance > 0.0) || o.max_iterations < 1)
    throw InvalidArgument("MM options: need tolerances > 0 and max_iterations >= 1");
}

}  // namespace

double cfpl_objective(const CMatrix& gamma, const RVector& theta) {
  if (theta.size() != gamma.rows()) throw InvalidArgument("cfpl_objective: dimension mismatch");
  const CVector w = unit_phasors(theta);
  const CMatrix model = gamma.cwiseAbs().cast<cdouble>().cwiseProduct(w * w.adjoint());
  return (model - gamma).squaredNorm();
}

PhaseLinkResult cfpl_phases(const CoherenceMatrix& gamma, const MmOptions& options) {
  check_mm_options(options);
  const CMatrix& gm = gamma.matrix();
  const Index n = gm.rows();
  const CMatrix h = linalg::hermitian_part(gm.cwiseAbs().cast<cdouble>().cwiseProduct(gm));
  const double lmin = linalg::eig(h).values(0);
  const CMatrix c = h - std::min(lmin, 0.0) * CMatrix::Identity(n, n);
  auto objective = [&](const CVector& w) { return cfpl_objective(gm, phases_of(w)); };
  PhaseLinkResult out = run_mm(c, unit_phasors(eigenvector_phases(gm)), objective, options, "cfpl");
  out.informative = has_off_diagonal(gm);
  return out;
}

double pta_objective(const CMatrix& gamma, const RMatrix& g_inv, const RVector& theta) {
  if (theta.size() != gamma.rows() || g_inv.rows() != gamma.rows()) throw InvalidArgument("pta_objective: dimension mismatch");
  const CVector w = unit_phasors(theta);
  const CMatrix b = g_inv.cast<cdouble>().cwiseProduct(gamma);
  return w.dot(b * w).real();
}

PhaseLinkResult pta_phases(const CoherenceMatrix& gamma, const MmOptions& options) {
  check_mm_options(options);
  const CMatrix& gm = gamma.matrix();
  const Index n = gm.rows();
  if (!has_off_diagonal(gm)) {
    PhaseLinkResult out;
    out.theta = RVector::Zero(n);
    out.informative = false;
    out.converged = true;
    return out;
  }
  const MagnitudeInverse mi = regularized_magnitude_inverse(gm.cwiseAbs());
  const CMatrix b = linalg::hermitian_part(mi.inverse.cast<cdouble>().cwiseProduct(gm));
  const double lmax = linalg::eig(b).values(n - 1);
  const CMatrix c = lmax * CMatrix::Identity(n, n) - b;
  auto objective = [&](const CVector& w) { return w.dot(b * w).real(); };
  PhaseLinkResult out = run_mm(c, unit_phasors(eigenvector_phases(gm)), objective, options, "pta");
  out.magnitude_shrinkage = mi.shrinkage;
  return out;
}

}  // namespace s2s
