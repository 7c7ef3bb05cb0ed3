#include "s2s/ces.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"

namespace s2s {

namespace {

void require_square(const CMatrix& m, const char* what) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    throw InvalidArgument(std::string(what) + ": expected a non-empty square matrix");
  }
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entries");
}

}  // namespace

// --- ShapeMatrix / CoherenceMatrix -------------------------------------------

ShapeMatrix ShapeMatrix::from_scatter(const CMatrix& scatter) {
  require_square(scatter, "shape matrix");
  CMatrix h = linalg::hermitian_part(scatter);
  const double tr = h.trace().real();
  if (!(tr > 0.0)) throw InvalidArgument("shape matrix: trace must be positive");
  h *= static_cast<double>(h.rows()) / tr;
  return ShapeMatrix(std::move(h));
}

CoherenceMatrix CoherenceMatrix::from_matrix(const CMatrix& gamma) {
  require_square(gamma, "coherence matrix");
  const double scale = std::max(1.0, gamma.cwiseAbs().maxCoeff());
  if ((gamma - gamma.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("coherence matrix: not Hermitian");
  }
  for (Index i = 0; i < gamma.rows(); ++i) {
    if (std::abs(gamma(i, i) - 1.0) > 1e-10) throw InvalidArgument("coherence matrix: diagonal must be 1");
  }
  CMatrix h = linalg::hermitian_part(gamma);
  h.diagonal().setOnes();
  return CoherenceMatrix(std::move(h));
}

double CoherenceMatrix::mean_coherence() const {
  const Index n = dim();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (Index j = 1; j < n; ++j)
    for (Index i = 0; i < j; ++i) sum += std::abs(m_(i, j));
  return sum / (0.5 * static_cast<double>(n * (n - 1)));
}

CoherenceMatrix normalize_to_coherence(const CMatrix& scatter) {
  require_square(scatter, "normalize_to_coherence");
  const Index n = scatter.rows();
  RVector inv_sd(n);
  for (Index i = 0; i < n; ++i) {
    const double d = scatter(i, i).real();
    if (!(d > 0.0)) throw InvalidArgument("normalize_to_coherence: non-positive diagonal entry " + std::to_string(i));
    inv_sd(i) = 1.0 / std::sqrt(d);
  }
  CMatrix gamma = inv_sd.asDiagonal() * linalg::hermitian_part(scatter) * inv_sd.asDiagonal();
  gamma.diagonal().setOnes();
  return CoherenceMatrix::from_matrix(gamma);
}

// --- sampling -----------------------------------------------------------------

void validate(const MagnitudeLaw& law) {
  if (const auto* k = std::get_if<KTexture>(&law)) {
    if (!(k->xi >= 0.0) || !std::isfinite(k->xi)) throw InvalidArgument("k_texture: xi must be finite and >= 0");
  } else if (const auto* c = std::get_if<ConstantMagnitude>(&law)) {
    if (!(c->value > 0.0) || !std::isfinite(c->value)) throw InvalidArgument("constant magnitude must be > 0");
  }
}

double sample_magnitude(const MagnitudeLaw& law, Index dim, Rng& rng) {
  auto gaussian_radius2 = [&] {
    std::gamma_distribution<double> base(static_cast<double>(dim), 1.0);
    return base(rng);
  };
  if (std::holds_alternative<Rayleigh>(law)) return std::sqrt(gaussian_radius2());
  if (const auto* k = std::get_if<KTexture>(&law)) {
    const double r2 = gaussian_radius2();
    if (k->xi == 0.0) return std::sqrt(r2);
    std::gamma_distribution<double> texture(1.0 / k->xi, k->xi);
    return std::sqrt(r2 * texture(rng));
  }
  return std::get<ConstantMagnitude>(law).value;
}

CVector sample_uniform_sphere(Index dim, Rng& rng) {
  if (dim < 1) throw InvalidArgument("sample_uniform_sphere: dimension must be >= 1");
  CVector u(dim);
  double norm = 0.0;
  do {
    for (Index k = 0; k < dim; ++k) u(k) = complex_normal(rng);
    norm = u.norm();
  } while (norm == 0.0);
  return u / norm;
}

CesSampler::CesSampler(const CMatrix& scatter, MagnitudeLaw law) : law_(std::move(law)) {
  require_square(scatter, "sample_ces");
  validate(law_);
  const auto e = linalg::eig(scatter);
  if (!(e.values.minCoeff() > 0.0)) throw NumericError("sample_ces: scatter matrix is not positive definite");
  factor_ = e.vectors * e.values.cwiseSqrt().asDiagonal() * e.vectors.adjoint();
}

CVector CesSampler::operator()(Rng& rng) const {
  const CVector u = sample_uniform_sphere(factor_.rows(), rng);
  const double r = sample_magnitude(law_, factor_.rows(), rng);
  return r * (factor_ * u);
}

CMatrix CesSampler::draw(Index count, Rng& rng) const {
  CMatrix out(factor_.rows(), count);
  for (Index i = 0; i < count; ++i) out.col(i) = (*this)(rng);
  return out;
}

CVector sample_ces(const CMatrix& scatter, const MagnitudeLaw& law, Rng& rng) {
  return CesSampler(scatter, law)(rng);
}

// --- Tyler --------------------------------------------------------------------

TylerFit tyler_fit(const CMatrix& samples, const TylerOptions& options) {
  const Index n = samples.rows();
  const Index count = samples.cols();
  if (n < 1) throw InvalidArgument("tyler: empty sample dimension");
  if (count < n) {
    throw InvalidArgument("tyler: rank deficiency, " + std::to_string(count) + " samples for dimension " +
                          std::to_string(n));
  }
  if (!(options.tol > 0.0) || options.max_iter < 1) throw InvalidArgument("tyler: tol must be > 0, max_iter >= 1");
  if (!samples.allFinite()) throw InvalidArgument("tyler: non-finite samples");

  // The iteration is scale-invariant; projecting onto the sphere first only
  // removes the dynamic range.
  CMatrix z(n, count);
  for (Index i = 0; i < count; ++i) {
    const double norm = samples.col(i).norm();
    if (norm == 0.0) throw InvalidArgument("tyler: degenerate (zero-norm) sample " + std::to_string(i));
    z.col(i) = samples.col(i) / norm;
  }

  const double dim = static_cast<double>(n);
  CMatrix sigma = CMatrix::Identity(n, n);
  TylerFit fit{ShapeMatrix::from_scatter(sigma)};
  for (int k = 1; k <= options.max_iter; ++k) {
    const RVector q = linalg::quadratic_forms(z, sigma);
    const CMatrix weighted = z * q.cwiseInverse().asDiagonal();
    CMatrix next = linalg::hermitian_part(weighted * z.adjoint());
    next *= dim / next.trace().real();
    fit.last_change = linalg::relative_frobenius(next, sigma);
    sigma = std::move(next);
    fit.iterations = k;
    if (fit.last_change < options.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.shape = ShapeMatrix::from_scatter(sigma);
  return fit;
}

ShapeMatrix tyler_estimate(const CMatrix& samples, const TylerOptions& options) {
  TylerFit fit = tyler_fit(samples, options);
  if (!fit.converged) {
    throw ConvergenceError("tyler: no convergence after " + std::to_string(fit.iterations) + " iterations",
                           fit.shape.matrix(), fit.iterations);
  }
  return fit.shape;
}

// --- shrinkage ------------------------------------------------------------

double elliptical_kurtosis(const CMatrix& samples) {
  if (samples.cols() < 1) throw InvalidArgument("elliptical_kurtosis: no samples");
  const CMatrix s = linalg::sample_covariance(samples);
  const double tr = s.trace().real();
  const double tr2 = s.squaredNorm();
  const double m4 = samples.colwise().squaredNorm().array().square().mean();
  const double denom = tr * tr + tr2;
  if (!(denom > 0.0)) throw InvalidArgument("elliptical_kurtosis: all-zero samples");
  return m4 / denom;
}

double auto_shrinkage_coefficient(const CMatrix& m, const AutoShrinkage& mode) {
  require_square(m, "auto shrinkage");
  if (mode.sample_count < 1) throw InvalidArgument("auto shrinkage: sample_count must be >= 1");
  if (!(mode.kurtosis > 0.0)) throw InvalidArgument("auto shrinkage: kurtosis must be > 0");
  const CMatrix h = linalg::hermitian_part(m);
  const double n = static_cast<double>(h.rows());
  const double tr = h.trace().real();
  if (!(tr > 0.0)) throw InvalidArgument("auto shrinkage: trace must be positive");
  const double sphericity = n * h.squaredNorm() / (tr * tr);
  const double gap = std::max(0.0, sphericity - 1.0);
  const double ratio = n / static_cast<double>(mode.sample_count);
  return std::min(1.0, ratio * mode.kurtosis / (mode.kurtosis + gap));
}

CMatrix shrink_to_identity(const CMatrix& m, const ShrinkageCoefficient& coefficient) {
  require_square(m, "shrink_to_identity");
  double rho = 0.0;
  if (const auto* fixed = std::get_if<double>(&coefficient)) {
    rho = *fixed;
    if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("shrink_to_identity: coefficient must lie in [0, 1]");
  } else {
    rho = auto_shrinkage_coefficient(m, std::get<AutoShrinkage>(coefficient));
  }
  if (rho == 0.0) return m;
  const CMatrix h = linalg::hermitian_part(m);
  const double level = h.trace().real() / static_cast<double>(h.rows());
  CMatrix out = (1.0 - rho) * h;
  out.diagonal().array() += rho * level;
  return out;
}

}  // namespace s2s
