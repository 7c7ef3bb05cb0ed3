#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "s2s/ces.hpp"
#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"
#include "s2s/phase_linking.hpp"
#include "test_support.hpp"

using namespace s2s;
using s2s::testing::decay_matrix;

namespace {

constexpr double kPi = std::numbers::pi;

RVector random_phases(Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  RVector t(n);
  for (Index k = 0; k < n; ++k) t(k) = u(rng);
  t(0) = 0.0;
  return t;
}

CVector phasors(const RVector& theta) {
  CVector w(theta.size());
  for (Index k = 0; k < theta.size(); ++k) w(k) = std::polar(1.0, theta(k));
  return w;
}

double max_phase_error(const RVector& a, const RVector& b) {
  double e = 0.0;
  for (Index k = 0; k < a.size(); ++k) e = std::max(e, std::abs(wrap_phase(a(k) - b(k))));
  return e;
}

// Gaussian samples with covariance G o (w w^H), real G.
CMatrix model_samples(const RMatrix& g, const RVector& theta, Index l, Rng& rng) {
  const CVector w = phasors(theta);
  const CMatrix sigma = g.cast<cdouble>().cwiseProduct(w * w.adjoint());
  const CMatrix a = linalg::hermitian_sqrt(sigma);
  CMatrix z(g.rows(), l);
  for (Index i = 0; i < l; ++i)
    for (Index k = 0; k < g.rows(); ++k) z(k, i) = complex_normal(rng);
  return a * z;
}

RMatrix magnitude_matrix(Index n, double tau, double p) { return decay_matrix(n, tau, p, 0.0).real(); }

// Rescales the rows of z so that the sample covariance has unit diagonal.
CMatrix normalize_rows(const CMatrix& z) {
  const CMatrix scm = linalg::sample_covariance(z);
  CMatrix out = z;
  for (Index k = 0; k < z.rows(); ++k) out.row(k) /= std::sqrt(scm(k, k).real());
  return out;
}

}  // namespace

TEST_CASE("realign_reference pins the first phase and wraps") {
  RVector c = RVector::Constant(4, 1.3);
  CHECK(realign_reference(c).cwiseAbs().maxCoeff() == 0.0);

  RVector t(2);
  t << 0.5, 0.5 + 2.0 * kPi;
  const RVector r = realign_reference(t);
  CHECK(r(0) == 0.0);
  CHECK(std::abs(r(1)) < 1e-12);

  Rng rng = make_stream(1);
  const RVector x = random_phases(6, rng) + RVector::Constant(6, 0.7);
  const RVector shifted = x + RVector::Constant(6, 2.9);
  CHECK(max_phase_error(realign_reference(x), realign_reference(shifted)) < 1e-12);
  const RVector y = realign_reference(x);
  CHECK(y.maxCoeff() <= kPi);
  CHECK(y.minCoeff() > -kPi);
}

TEST_CASE("wrap_phase maps -pi to pi") {
  CHECK(wrap_phase(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(3.0 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(0.25) == doctest::Approx(0.25));
}

TEST_CASE("phase_stat examples and brute-force oracle") {
  Rng rng = make_stream(2);
  const RVector theta = random_phases(7, rng);
  CHECK(phase_stat(phasors(theta), theta) == doctest::Approx(1.0).epsilon(1e-14));

  RVector t2 = RVector::Zero(2);
  CVector z2(2);
  z2 << std::polar(1.0, kPi), cdouble(2.0);
  CHECK(phase_stat(z2, t2) == doctest::Approx(-1.0).epsilon(1e-14));

  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + trial % 9;
    CVector z(n);
    for (Index k = 0; k < n; ++k) z(k) = complex_normal(rng);
    const RVector t = random_phases(n, rng);
    double acc = 0.0;
    int pairs = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (j > i) {
          acc += std::cos(t(i) - t(j) - (std::arg(z(i)) - std::arg(z(j))));
          ++pairs;
        }
    const double v = phase_stat(z, t);
    CHECK(std::abs(v - acc / pairs) < 1e-12);
    CHECK(std::abs(v) <= 1.0);
  }

  CVector bad(3);
  bad << 1.0, 0.0, 1.0;
  CHECK_THROWS_AS(phase_stat(bad, RVector::Zero(3)), InvalidArgument);
  CHECK_THROWS_AS(phase_stat(CVector::Ones(1), RVector::Zero(1)), InvalidArgument);
}

TEST_CASE("all linkers recover consistent phases exactly") {
  Rng rng = make_stream(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 6 + trial;
    const RVector truth = random_phases(n, rng);
    const RMatrix g = magnitude_matrix(n, 3.0, 0.2);
    const CVector w = phasors(truth);
    const CMatrix gamma = g.cast<cdouble>().cwiseProduct(w * w.adjoint());
    const auto cm = CoherenceMatrix::from_matrix(gamma);

    const PhaseLinkResult cf = cfpl_phases(cm);
    CHECK(max_phase_error(cf.theta, truth) < 1e-6);
    CHECK(cf.objective < 1e-12);
    const PhaseLinkResult pt = pta_phases(cm);
    CHECK(max_phase_error(pt.theta, truth) < 1e-6);

    // Noiseless rank-1 samples with G the all-ones matrix.
    CMatrix z(n, 30);
    for (Index i = 0; i < 30; ++i) z.col(i) = complex_normal(rng) * w;
    const RMatrix ones = RMatrix::Ones(n, n);
    for (double s : {0.3, 1.0, 2.0}) {
      const PhaseLinkResult ml = cgg_mle_phases(z, ones, s, RVector::Zero(n));
      CHECK(max_phase_error(ml.theta, truth) < 1e-6);
      CHECK(ml.magnitude_shrinkage > 0.0);  // the ones matrix is singular
    }
    // Consistent full-rank data with a warm start from the eigenvector.
    const CMatrix zs = model_samples(g, truth, 200, rng);
    const PhaseLinkResult ml = cgg_mle_phases(zs, g, 1.0, eigenvector_phases(gamma));
    CHECK(ml.converged);
    CHECK(ml.gradient_norm < 1e-6);
  }
}

TEST_CASE("two acquisitions: CFPL matches the closed form") {
  // With Gamma = G o (w w^H), Gamma_12 = |Gamma_12| exp(j(theta_1 - theta_2)),
  // so theta_2 = arg(Gamma_21) = -arg(Gamma_12).
  Rng rng = make_stream(4);
  for (int trial = 0; trial < 20; ++trial) {
    const cdouble c = std::polar(0.05 + 0.9 * std::uniform_real_distribution<double>()(rng),
                                 std::uniform_real_distribution<double>(-kPi, kPi)(rng));
    CMatrix gamma(2, 2);
    gamma << 1.0, c, std::conj(c), 1.0;
    const PhaseLinkResult r = cfpl_phases(CoherenceMatrix::from_matrix(gamma));
    CHECK(r.theta(0) == 0.0);
    CHECK(std::abs(wrap_phase(r.theta(1) - std::arg(gamma(1, 0)))) < 1e-10);
    const PhaseLinkResult p = pta_phases(CoherenceMatrix::from_matrix(gamma));
    CHECK(std::abs(wrap_phase(p.theta(1) - std::arg(gamma(1, 0)))) < 1e-10);
  }
}

TEST_CASE("CGG-MLE at s = 1 agrees with PTA on the same coherence") {
  Rng rng = make_stream(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 5 + trial % 6;
    const RVector truth = random_phases(n, rng);
    const RMatrix g = magnitude_matrix(n, 2.0, 0.3);
    const CMatrix z = normalize_rows(model_samples(g, truth, 60, rng));
    const CMatrix gamma_hat = linalg::hermitian_part(linalg::sample_covariance(z));
    const auto cm = CoherenceMatrix::from_matrix(normalize_to_coherence(gamma_hat).matrix());
    const PhaseLinkResult pt = pta_phases(cm);
    REQUIRE(pt.converged);
    const PhaseLinkResult ml = cgg_mle_phases(z, cm.magnitudes(), 1.0, eigenvector_phases(cm.matrix()));
    REQUIRE(ml.converged);
    CHECK(pt.magnitude_shrinkage == ml.magnitude_shrinkage);
    CHECK(max_phase_error(ml.theta, pt.theta) < 1e-4);
  }
}

TEST_CASE("MM objectives never increase") {
  Rng rng = make_stream(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 8;
    const RVector truth = random_phases(n, rng);
    const RMatrix g = magnitude_matrix(n, 2.0, 0.1);
    const CVector w = phasors(truth);
    CMatrix gamma = g.cast<cdouble>().cwiseProduct(w * w.adjoint());
    CMatrix e(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) e(i, j) = 0.3 * complex_normal(rng);
    gamma += linalg::hermitian_part(e);
    gamma.diagonal().setOnes();
    const auto cm = CoherenceMatrix::from_matrix(gamma);
    for (const PhaseLinkResult& r : {cfpl_phases(cm), pta_phases(cm)}) {
      REQUIRE(r.objective_trace.size() >= 2);
      for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
        CHECK(r.objective_trace[k] <= r.objective_trace[k - 1] + 1e-10 * std::max(1.0, std::abs(r.objective_trace[k - 1])));
    }
  }
}

TEST_CASE("CGG-MLE gradient matches central differences") {
  Rng rng = make_stream(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 4 + trial % 5;
    const RMatrix g = magnitude_matrix(n, 1.5, 0.2);
    const CMatrix z = model_samples(g, random_phases(n, rng), 40, rng);
    const RMatrix m = regularized_magnitude_inverse(g).inverse;
    const double s = 0.3 + 0.2 * trial;
    const RVector theta = random_phases(n, rng);
    RVector grad;
    cgg_mle_objective(z, m, s, theta, &grad);
    RVector fd(n);
    const double h = 1e-6;
    for (Index k = 0; k < n; ++k) {
      RVector tp = theta, tm = theta;
      tp(k) += h;
      tm(k) -= h;
      fd(k) = (cgg_mle_objective(z, m, s, tp) - cgg_mle_objective(z, m, s, tm)) / (2.0 * h);
    }
    CHECK((grad - fd).norm() / grad.norm() < 1e-5);
  }
}

TEST_CASE("estimators are gauge invariant") {
  Rng rng = make_stream(8);
  const Index n = 7;
  const RMatrix g = magnitude_matrix(n, 2.0, 0.2);
  const CMatrix z = model_samples(g, random_phases(n, rng), 80, rng);
  const cdouble rot = std::polar(1.0, 1.234);
  const CMatrix z2 = rot * z;

  auto gamma_of = [](const CMatrix& x) {
    return normalize_to_coherence(linalg::hermitian_part(linalg::sample_covariance(x)));
  };
  const auto c1 = gamma_of(z);
  const auto c2 = gamma_of(z2);
  CHECK(max_phase_error(cfpl_phases(c1).theta, cfpl_phases(c2).theta) < 1e-8);
  CHECK(max_phase_error(pta_phases(c1).theta, pta_phases(c2).theta) < 1e-8);
  const RVector init = eigenvector_phases(c1.matrix());
  CHECK(max_phase_error(cgg_mle_phases(z, c1.magnitudes(), 0.6, init).theta,
                        cgg_mle_phases(z2, c2.magnitudes(), 0.6, init).theta) < 1e-8);
}

TEST_CASE("permuting acquisitions permutes the estimate") {
  Rng rng = make_stream(9);
  const Index n = 6;
  const RMatrix g = magnitude_matrix(n, 2.0, 0.2);
  const CMatrix z = model_samples(g, random_phases(n, rng), 80, rng);
  Eigen::VectorXi perm(n);
  perm << 0, 3, 1, 5, 2, 4;  // keep the reference first
  Eigen::PermutationMatrix<Eigen::Dynamic> p(perm);
  const CMatrix zp = p.transpose() * z;

  auto gamma_of = [](const CMatrix& x) {
    return normalize_to_coherence(linalg::hermitian_part(linalg::sample_covariance(x)));
  };
  const RVector a = cfpl_phases(gamma_of(z)).theta;
  const RVector b = cfpl_phases(gamma_of(zp)).theta;
  CHECK(max_phase_error(RVector(p.transpose() * a), b) < 1e-8);
  const RVector c = pta_phases(gamma_of(z)).theta;
  const RVector d = pta_phases(gamma_of(zp)).theta;
  CHECK(max_phase_error(RVector(p.transpose() * c), d) < 1e-8);
}

TEST_CASE("PTA on the identity is non-informative") {
  const auto cm = CoherenceMatrix::from_matrix(CMatrix::Identity(5, 5));
  const PhaseLinkResult r = pta_phases(cm);
  CHECK_FALSE(r.informative);
  CHECK(r.theta.cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(cfpl_phases(cm).informative);
}

TEST_CASE("magnitude inverse shrinks singular inputs") {
  const RMatrix ok = magnitude_matrix(5, 2.0, 0.2);
  const MagnitudeInverse a = regularized_magnitude_inverse(ok);
  CHECK(a.shrinkage == 0.0);
  CHECK((a.inverse * ok - RMatrix::Identity(5, 5)).norm() < 1e-10);
  const MagnitudeInverse b = regularized_magnitude_inverse(RMatrix::Ones(4, 4));
  CHECK(b.shrinkage > 0.0);
  CHECK(b.inverse.allFinite());
  CHECK_THROWS_AS(regularized_magnitude_inverse(RMatrix::Ones(3, 2)), InvalidArgument);
}

TEST_CASE("argument validation") {
  const CMatrix z = CMatrix::Ones(3, 5);
  CHECK_THROWS_AS(cgg_mle_phases(z, RMatrix::Identity(3, 3), 0.0, RVector::Zero(3)), InvalidArgument);
  CHECK_THROWS_AS(cgg_mle_phases(z, RMatrix::Identity(2, 2), 1.0, RVector::Zero(3)), InvalidArgument);
  CHECK_THROWS_AS(cfpl_phases(CoherenceMatrix::from_matrix(CMatrix::Identity(2, 2)), MmOptions{0.0, 1e-9, 10}), InvalidArgument);
}
