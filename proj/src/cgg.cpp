#include "s2s/cgg.hpp"

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"

namespace s2s {

namespace {

void check_shape(Index dim, double s) {
  if (dim < 1) throw InvalidArgument("cgg: dimension must be >= 1");
  if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("cgg: shape parameter s must be finite and > 0");
}

struct Cholesky {
  Eigen::LLT<CMatrix> llt;
  double log_det = 0.0;
};

Cholesky factor_pd(const CMatrix& scatter) {
  if (scatter.rows() != scatter.cols()) throw InvalidArgument("cgg: scatter matrix must be square");
  Cholesky c{Eigen::LLT<CMatrix>(linalg::hermitian_part(scatter))};
  if (c.llt.info() != Eigen::Success) throw NumericError("cgg: scatter matrix is not positive definite");
  const RVector diag = c.llt.matrixLLT().diagonal().real();
  if (!(diag.minCoeff() > 0.0)) throw NumericError("cgg: scatter matrix is not positive definite");
  c.log_det = 2.0 * diag.array().log().sum();
  return c;
}

RVector quad_forms(const CMatrix& samples, const Cholesky& c) {
  const CMatrix w = c.llt.matrixL().solve(samples);
  return w.colwise().squaredNorm().transpose();
}

// s-independent part of the log-density.
double log_pdf_constant(Index n, double log_det) {
  return std::lgamma(double(n)) - double(n) * std::log(std::numbers::pi) - log_det;
}

}  // namespace

double cgg_log_b(Index dim, double s) {
  check_shape(dim, s);
  const double n = static_cast<double>(dim);
  return s * (std::log(n) + std::lgamma(n / s) - std::lgamma((n + 1.0) / s));
}

double cgg_b(Index dim, double s) {
  const double lb = cgg_log_b(dim, s);
  const double b = std::exp(lb);
  if (!std::isfinite(b) || b <= 0.0) {
    throw NumericError("cgg_b: b = exp(" + std::to_string(lb) + ") is not representable");
  }
  return b;
}

double shape_objective(const RVector& q, Index dim, double s) {
  check_shape(dim, s);
  if (q.size() == 0) throw InvalidArgument("shape_objective: no samples");
  const double n = static_cast<double>(dim);
  const double log_b = cgg_log_b(dim, s);
  double acc = 0.0;
  for (Index i = 0; i < q.size(); ++i) acc += std::exp(s * std::log(q(i)) - log_b);
  return std::log(s) - std::lgamma(n / s) - (n / s) * log_b - acc / double(q.size());
}

double cgg_log_pdf(const CVector& z, const CMatrix& scatter, double s) {
  check_shape(z.size(), s);
  if (scatter.rows() != z.size()) throw InvalidArgument("cgg_log_pdf: dimension mismatch");
  const Cholesky c = factor_pd(scatter);
  const double q = quad_forms(z, c)(0);
  RVector qv(1);
  qv(0) = q;
  return shape_objective(qv, z.size(), s) + log_pdf_constant(z.size(), c.log_det);
}

double cgg_log_likelihood(const CMatrix& samples, const CMatrix& scatter, double s) {
  check_shape(samples.rows(), s);
  if (samples.cols() < 1) throw InvalidArgument("cgg_log_likelihood: no samples");
  if (scatter.rows() != samples.rows()) throw InvalidArgument("cgg_log_likelihood: dimension mismatch");
  const Cholesky c = factor_pd(scatter);
  const double l = static_cast<double>(samples.cols());
  return l * (shape_objective(quad_forms(samples, c), samples.rows(), s) + log_pdf_constant(samples.rows(), c.log_det));
}

namespace {

ShapeEstimate maximize_shape(const RVector& q, Index dim, const ShapeSearch& search) {
  if (!(search.s_min > 0.0 && search.s_max > search.s_min)) throw InvalidArgument("shape search: need 0 < s_min < s_max");
  if (search.grid_points < 3) throw InvalidArgument("shape search: need at least 3 grid points");
  const double lo = std::log(search.s_min);
  const double hi = std::log(search.s_max);
  const int m = search.grid_points;
  auto f = [&](double log_s) { return shape_objective(q, dim, std::exp(log_s)); };

  int best = -1;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < m; ++k) {
    const double v = f(lo + (hi - lo) * k / (m - 1));
    if (std::isfinite(v) && v > best_val) {
      best_val = v;
      best = k;
    }
  }
  if (best < 0) throw NumericError("estimate_shape_s: objective is non-finite over the whole search interval");

  const double a = lo + (hi - lo) * std::max(best - 1, 0) / (m - 1);
  const double b = lo + (hi - lo) * std::min(best + 1, m - 1) / (m - 1);
  auto neg = [&](double x) {
    const double v = f(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  const auto [x, negv] = boost::math::tools::brent_find_minima(neg, a, b, 40);

  ShapeEstimate out;
  if (-negv >= best_val) {
    out.s = std::exp(x);
    out.objective = -negv;
  } else {
    out.s = std::exp(lo + (hi - lo) * best / (m - 1));
    out.objective = best_val;
  }
  const double edge = 1e-3 * (hi - lo);
  out.at_lower_bound = std::log(out.s) - lo < edge;
  out.at_upper_bound = hi - std::log(out.s) < edge;
  return out;
}

}  // namespace

ShapeEstimate estimate_shape_s(const CMatrix& samples, const CMatrix& scatter, const ShapeSearch& search) {
  if (samples.cols() < 2) throw InvalidArgument("estimate_shape_s: need at least 2 samples");
  if (scatter.rows() != samples.rows()) throw InvalidArgument("estimate_shape_s: dimension mismatch");
  return maximize_shape(quad_forms(samples, factor_pd(scatter)), samples.rows(), search);
}

CMatrix cgg_scatter_update(const CMatrix& samples, const CMatrix& scatter, double s, bool* regularized) {
  check_shape(samples.rows(), s);
  if (samples.cols() < 1) throw InvalidArgument("cgg_scatter_update: no samples");
  if (scatter.rows() != samples.rows()) throw InvalidArgument("cgg_scatter_update: dimension mismatch");
  const RVector q = linalg::quadratic_forms(samples, scatter);
  const double log_scale = std::log(s) - cgg_log_b(samples.rows(), s);
  RVector phi(q.size());
  for (Index i = 0; i < q.size(); ++i) phi(i) = std::exp(log_scale + (s - 1.0) * std::log(q(i)));
  CMatrix next = samples * phi.asDiagonal() * samples.adjoint() / double(samples.cols());
  next = linalg::hermitian_part(next);
  bool loaded = false;
  next = linalg::load_if_ill_conditioned(next, &loaded);
  if (regularized) *regularized = loaded;
  return next;
}

void CggOptions::validate() const {
  if (!(search.s_min > 0.0 && search.s_max > search.s_min)) throw InvalidArgument("cgg.s_min/s_max: need 0 < s_min < s_max");
  if (search.grid_points < 3) throw InvalidArgument("cgg.grid_points must be >= 3");
  if (!(s_tol > 0.0 && scatter_tol > 0.0)) throw InvalidArgument("cgg tolerances must be > 0");
  if (max_rounds < 1) throw InvalidArgument("cgg.max_rounds must be >= 1");
}

CggFit estimate_cgg(const CMatrix& samples, const CggOptions& options) {
  options.validate();
  const Index n = samples.rows();
  const Index l = samples.cols();
  if (n < 1 || l < 2) throw InvalidArgument("estimate_cgg: need N >= 1 and at least 2 samples");

  CggFit fit;
  bool loaded = false;
  fit.scatter = linalg::load_if_ill_conditioned(linalg::hermitian_part(linalg::sample_covariance(samples)), &loaded);
  fit.regularized = loaded;
  fit.s = 1.0;

  auto log_lik = [&](const CMatrix& sc, double s) { return cgg_log_likelihood(samples, sc, s); };
  double ll = log_lik(fit.scatter, fit.s);

  for (int round = 1; round <= options.max_rounds; ++round) {
    fit.iterations = round;

    // s-step, kept only if it does not lower the likelihood.
    const RVector q = quad_forms(samples, factor_pd(fit.scatter));
    const ShapeEstimate se = maximize_shape(q, n, options.search);
    const double s_prev = fit.s;
    if (se.objective >= shape_objective(q, n, fit.s)) {
      fit.s = se.s;
      fit.s_at_bound = se.at_lower_bound || se.at_upper_bound;
    }
    ll = log_lik(fit.scatter, fit.s);
    fit.log_likelihood_trace.push_back(ll);

    // Scatter step with backtracking along the segment to the fixed-point image.
    bool step_loaded = false;
    const CMatrix target = cgg_scatter_update(samples, fit.scatter, fit.s, &step_loaded);
    fit.regularized = fit.regularized || step_loaded;
    CMatrix next = fit.scatter;
    double eta = 1.0;
    for (int half = 0; half < 30; ++half, eta *= 0.5) {
      const CMatrix trial = (1.0 - eta) * fit.scatter + eta * target;
      double ll_trial = -std::numeric_limits<double>::infinity();
      try {
        ll_trial = log_lik(trial, fit.s);
      } catch (const NumericError&) {
      }
      if (ll_trial >= ll) {
        next = trial;
        ll = ll_trial;
        break;
      }
    }
    // Exact scale step: for Sigma = c V and fixed s the likelihood peaks at
    // c^s = s mean(q_V^s) / (N b). Scale and s are strongly coupled for heavy
    // tails and the fixed-point step alone creeps along this direction.
    {
      const RVector qv = quad_forms(samples, factor_pd(next));
      const double log_b = cgg_log_b(n, fit.s);
      double acc = 0.0;
      for (Index i = 0; i < l; ++i) acc += std::exp(fit.s * std::log(qv(i)) - log_b);
      const double c = std::pow(fit.s * acc / double(l) / double(n), 1.0 / fit.s);
      if (std::isfinite(c) && c > 0.0) {
        const CMatrix scaled = c * next;
        const double ll_scaled = log_lik(scaled, fit.s);
        if (ll_scaled >= ll) {
          next = scaled;
          ll = ll_scaled;
        }
      }
    }
    const double delta = linalg::relative_frobenius(next, fit.scatter);
    fit.scatter = std::move(next);
    fit.log_likelihood_trace.push_back(ll);

    if (std::abs(fit.s - s_prev) / s_prev < options.s_tol && delta < options.scatter_tol) {
      fit.converged = true;
      break;
    }
  }
  fit.log_likelihood = ll;
  return fit;
}

}  // namespace s2s
