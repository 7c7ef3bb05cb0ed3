#include "s2s/linalg.hpp"

#include <cmath>
#include <limits>

#include "s2s/errors.hpp"

namespace s2s::linalg {

CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

HermitianEig eig(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(hermitian_part(m));
  if (solver.info() != Eigen::Success) {
    throw NumericError("Hermitian eigendecomposition failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

double relative_frobenius(const CMatrix& a, const CMatrix& b) {
  const double denom = b.norm();
  if (denom == 0.0) return (a - b).norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (a - b).norm() / denom;
}

double condition_number(const CMatrix& m) {
  const RVector ev = eig(m).values;
  const double lo = ev.minCoeff();
  const double hi = ev.cwiseAbs().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

CMatrix load_if_ill_conditioned(const CMatrix& m, bool* loaded) {
  CMatrix h = hermitian_part(m);
  const bool fire = !(condition_number(h) <= kLoadingCondition);
  if (loaded) *loaded = fire;
  if (fire) {
    const double n = static_cast<double>(h.rows());
    const double level = std::abs(h.trace().real()) / n;
    h.diagonal().array() += kLoadingEpsilon * (level > 0.0 ? level : 1.0);
  }
  return h;
}

CMatrix hermitian_sqrt(const CMatrix& m) {
  const HermitianEig e = eig(m);
  const double scale = e.values.cwiseAbs().maxCoeff();
  RVector root(e.values.size());
  for (Index k = 0; k < e.values.size(); ++k) {
    double v = e.values(k);
    if (v < 0.0) {
      if (v < -1e-10 * scale) throw NumericError("matrix square root: matrix is not positive semi-definite");
      v = 0.0;
    }
    root(k) = std::sqrt(v);
  }
  return e.vectors * root.asDiagonal() * e.vectors.adjoint();
}

namespace {

// Cholesky with the loading policy; the rcond() estimate stands in for the
// eigenvalue condition number on the hot path.
Eigen::LLT<CMatrix> loaded_cholesky(const CMatrix& m) {
  CMatrix h = hermitian_part(m);
  Eigen::LLT<CMatrix> llt(h);
  if (llt.info() == Eigen::Success && llt.rcond() * kLoadingCondition >= 1.0) return llt;
  const double n = static_cast<double>(h.rows());
  const double level = std::abs(h.trace().real()) / n;
  h.diagonal().array() += kLoadingEpsilon * (level > 0.0 ? level : 1.0);
  llt.compute(h);
  if (llt.info() != Eigen::Success) throw NumericError("matrix is not positive definite after diagonal loading");
  return llt;
}

}  // namespace

CMatrix inverse_hpd(const CMatrix& m) {
  const auto llt = loaded_cholesky(m);
  return hermitian_part(llt.solve(CMatrix::Identity(m.rows(), m.cols())));
}

CMatrix sample_covariance(const CMatrix& samples) {
  const double count = static_cast<double>(samples.cols());
  return hermitian_part(samples * samples.adjoint() / count);
}

RVector quadratic_forms(const CMatrix& samples, const CMatrix& m) {
  const auto llt = loaded_cholesky(m);
  const CMatrix w = llt.solve(samples);
  return (samples.conjugate().cwiseProduct(w)).colwise().sum().real().transpose();
}

}  // namespace s2s::linalg
