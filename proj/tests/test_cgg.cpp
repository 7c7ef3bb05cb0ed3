#include "doctest.h"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "s2s/ces.hpp"
#include "s2s/cgg.hpp"
#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"
#include "test_support.hpp"

using namespace s2s;
using s2s::testing::decay_matrix;
using s2s::testing::median;
using s2s::testing::random_hpd;

namespace {

// Exact CGG draws: q = z^H Sigma^-1 z satisfies q^s / b ~ Gamma(N/s, 1).
CMatrix cgg_draws(const CMatrix& scatter, double s, Index count, Rng& rng) {
  const Index n = scatter.rows();
  const CMatrix a = linalg::hermitian_sqrt(scatter);
  const double b = cgg_b(n, s);
  std::gamma_distribution<double> gam(double(n) / s, 1.0);
  CMatrix out(n, count);
  for (Index i = 0; i < count; ++i) {
    const double q = std::pow(b * gam(rng), 1.0 / s);
    out.col(i) = std::sqrt(q) * (a * sample_uniform_sphere(n, rng));
  }
  return out;
}

double ccg_log_pdf(const CVector& z, const CMatrix& sigma) {
  const double n = double(z.size());
  const double q = (z.adjoint() * sigma.inverse() * z)(0, 0).real();
  return -n * std::log(std::numbers::pi) - std::log(sigma.determinant().real()) - q;
}

}  // namespace

TEST_CASE("cgg_b closed forms") {
  for (int n : {1, 2, 5, 30, 100}) CHECK(std::abs(cgg_b(n, 1.0) - 1.0) < 1e-12);
  CHECK(std::abs(cgg_b(1, 2.0) - std::numbers::pi) < 1e-12);
  CHECK_THROWS_AS(cgg_b(0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(cgg_b(3, 0.0), InvalidArgument);
}

TEST_CASE("cgg_b agrees with a 50-digit log-gamma evaluation") {
  using big = boost::multiprecision::cpp_bin_float_50;
  for (auto [n, s] : {std::pair{30, 0.5}, {30, 0.1}, {5, 3.7}, {20, 10.0}, {2, 0.25}}) {
    const big nb(n), sb(s);
    const big log_b = sb * (log(nb) + boost::math::lgamma(nb / sb) - boost::math::lgamma((nb + 1) / sb));
    const double oracle = static_cast<double>(exp(log_b));
    CHECK(std::abs(cgg_b(n, s) / oracle - 1.0) < 1e-10);
  }
}

TEST_CASE("s = 1 log-density equals the circular Gaussian log-density") {
  Rng rng(31);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Index n = 1 + k % 6;
    const CMatrix sigma = random_hpd(n, rng);
    CVector z(n);
    for (Index i = 0; i < n; ++i) z(i) = 2.0 * complex_normal(rng);
    worst = std::max(worst, std::abs(cgg_log_pdf(z, sigma, 1.0) - ccg_log_pdf(z, sigma)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("one-dimensional density integrates to one") {
  // With N = 1 and Sigma = v, f depends on t = |z|^2 and d^2z = pi dt.
  const double v = 1.7;
  CMatrix sigma(1, 1);
  sigma(0, 0) = v;
  for (double s : {0.5, 2.0}) {
    auto f = [&](double t) {
      CVector z(1);
      z(0) = std::sqrt(t);
      return std::numbers::pi * std::exp(cgg_log_pdf(z, sigma, s));
    };
    const double quad = boost::math::quadrature::exp_sinh<double>().integrate(f);
    CHECK(std::abs(quad - 1.0) < 1e-8);

    // Importance sampling with the heavy-tailed proposal p(t) = c / (c + t)^2.
    Rng rng(32);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double c = 2.0;
    double acc = 0.0;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
      const double u = unif(rng);
      const double t = c * u / (1.0 - u);
      acc += f(t) * (c + t) * (c + t) / c;
    }
    CHECK(std::abs(acc / draws - 1.0) < 0.01);
  }
}

TEST_CASE("log-density scaling law") {
  Rng rng(33);
  const CMatrix sigma = random_hpd(4, rng);
  CVector z(4);
  for (Index i = 0; i < 4; ++i) z(i) = complex_normal(rng);
  for (double s : {0.3, 1.0, 2.5}) {
    const double c = 3.1;
    CHECK(std::abs(cgg_log_pdf(c * z, c * c * sigma, s) - (cgg_log_pdf(z, sigma, s) - 2.0 * 4 * std::log(c))) < 1e-10);
  }
  CMatrix bad = CMatrix::Identity(4, 4);
  bad(3, 3) = -1.0;
  CHECK_THROWS_AS(cgg_log_pdf(z, bad, 1.0), NumericError);
  CHECK_THROWS_AS(cgg_log_pdf(z, CMatrix::Identity(3, 3), 1.0), InvalidArgument);
}

TEST_CASE("shape estimate on Gaussian data is close to one") {
  const CMatrix sigma = decay_matrix(5, 3.0, 0.2);
  Rng rng(34);
  const CMatrix z = CesSampler(sigma, Rayleigh{}).draw(5000, rng);
  const ShapeEstimate e = estimate_shape_s(z, sigma);
  CHECK(e.s > 0.85);
  CHECK(e.s < 1.15);
  CHECK_FALSE(e.at_upper_bound);
  CHECK_FALSE(e.at_lower_bound);
}

TEST_CASE("shape estimate recovers the generating s") {
  const CMatrix sigma = decay_matrix(6, 4.0, 0.2);
  for (double s_true : {0.4, 0.7, 2.0}) {
    Rng rng(35);
    const CMatrix z = cgg_draws(sigma, s_true, 5000, rng);
    const ShapeEstimate e = estimate_shape_s(z, sigma);
    CHECK(std::abs(std::log(e.s / s_true)) < 0.1);
  }
}

TEST_CASE("shape estimate decreases with K texture variance") {
  const int n = 30;
  const CMatrix sigma = decay_matrix(n, 8.0, 0.2);
  std::vector<double> s_hat;
  for (double xi : {0.0, 0.3, 0.6}) {
    Rng rng(36);
    const CMatrix z = CesSampler(sigma, KTexture{xi}).draw(3000, rng);
    s_hat.push_back(estimate_shape_s(z, sigma).s);
  }
  CHECK(s_hat[0] > s_hat[1]);
  CHECK(s_hat[1] > s_hat[2]);
}

TEST_CASE("constant magnitudes push s to the upper bound") {
  const int n = 4;
  const CMatrix sigma = decay_matrix(n, 3.0, 0.3);
  Rng rng(37);
  const CMatrix z = CesSampler(sigma, ConstantMagnitude{std::sqrt(double(n))}).draw(500, rng);
  const ShapeEstimate e = estimate_shape_s(z, sigma);
  CHECK(e.at_upper_bound);
  CHECK(e.s == doctest::Approx(10.0).epsilon(0.01));
}

TEST_CASE("shape objective errors") {
  CHECK_THROWS_AS(estimate_shape_s(CMatrix::Ones(3, 1), CMatrix::Identity(3, 3)), InvalidArgument);
  ShapeSearch bad;
  bad.s_min = 2.0;
  bad.s_max = 1.0;
  CHECK_THROWS_AS(estimate_shape_s(CMatrix::Ones(3, 5), CMatrix::Identity(3, 3), bad), InvalidArgument);
}

TEST_CASE("scatter update at s = 1 is the sample covariance") {
  Rng rng(38);
  const CMatrix z = CesSampler(random_hpd(5, rng), Rayleigh{}).draw(40, rng);
  const CMatrix scm = linalg::sample_covariance(z);
  for (int k = 0; k < 3; ++k) {
    const CMatrix any = random_hpd(5, rng);
    CHECK(linalg::relative_frobenius(cgg_scatter_update(z, any, 1.0), scm) < 1e-10);
  }
}

TEST_CASE("scatter update of a repeated sample is rank one and gets regularized") {
  Rng rng(39);
  CVector v(4);
  for (Index i = 0; i < 4; ++i) v(i) = complex_normal(rng);
  const CMatrix z = v.replicate(1, 10);
  const CMatrix current = CMatrix::Identity(4, 4);
  const double s = 0.6;
  bool reg = false;
  const CMatrix next = cgg_scatter_update(z, current, s, &reg);
  CHECK(reg);
  const double q = v.squaredNorm();
  const double phi = s / cgg_b(4, s) * std::pow(q, s - 1.0);
  CHECK(linalg::relative_frobenius(next, phi * v * v.adjoint()) < 1e-6);
}

TEST_CASE("scatter fixed point converges and its error shrinks with L") {
  const int n = 4;
  const double s = 0.6;
  const CMatrix truth = decay_matrix(n, 3.0, 0.2);
  std::vector<double> errs;
  for (Index l : {100, 1000, 10000}) {
    std::vector<double> rep;
    for (int r = 0; r < 7; ++r) {
      Rng rng = make_stream(40, l, r);
      const CMatrix z = cgg_draws(truth, s, l, rng);
      CMatrix cur = linalg::sample_covariance(z);
      double change = 1.0;
      int it = 0;
      while (change >= 1e-6 && it < 100) {
        const CMatrix next = cgg_scatter_update(z, cur, s);
        change = linalg::relative_frobenius(next, cur);
        cur = next;
        ++it;
      }
      CHECK(change < 1e-6);
      rep.push_back(linalg::relative_frobenius(cur, truth));
    }
    errs.push_back(median(rep));
  }
  CHECK(errs[0] > errs[1]);
  CHECK(errs[1] > errs[2]);
}

TEST_CASE("joint estimate on Gaussian data") {
  const CMatrix sigma = decay_matrix(5, 3.0, 0.2);
  Rng rng(41);
  const CMatrix z = CesSampler(sigma, Rayleigh{}).draw(5000, rng);
  const CggFit fit = estimate_cgg(z);
  CHECK(fit.converged);
  CHECK(fit.s > 0.85);
  CHECK(fit.s < 1.15);
  CHECK(linalg::relative_frobenius(fit.scatter, linalg::sample_covariance(z)) < 0.05);
  CHECK(std::abs(fit.log_likelihood - cgg_log_likelihood(z, fit.scatter, fit.s)) < 1e-6 * std::abs(fit.log_likelihood));
}

TEST_CASE("joint estimate recovers heavy-tailed CGG data and never lowers the likelihood") {
  const CMatrix sigma = decay_matrix(6, 5.0, 0.2);
  Rng rng(42);
  const CMatrix z = cgg_draws(sigma, 0.5, 3000, rng);
  const CggFit fit = estimate_cgg(z);
  CHECK(std::abs(std::log(fit.s / 0.5)) < 0.15);
  CHECK(linalg::relative_frobenius(fit.scatter, sigma) < 0.1);
  for (std::size_t k = 1; k < fit.log_likelihood_trace.size(); ++k) {
    CHECK(fit.log_likelihood_trace[k] >= fit.log_likelihood_trace[k - 1] - 1e-8);
  }
}

TEST_CASE("joint estimate is scale equivariant") {
  Rng rng(43);
  const CMatrix z = CesSampler(decay_matrix(5, 4.0, 0.2), KTexture{0.5}).draw(400, rng);
  const CggFit a = estimate_cgg(z);
  const double c = 7.3;
  const CggFit b = estimate_cgg(c * z);
  CHECK(std::abs(a.s - b.s) < 1e-6 * a.s);
  CHECK(linalg::relative_frobenius(b.scatter, c * c * a.scatter) < 1e-6);
}

TEST_CASE("joint estimate with L = N completes") {
  Rng rng(44);
  const CMatrix z = CesSampler(decay_matrix(6, 2.0, 0.1), Rayleigh{}).draw(6, rng);
  CggFit fit;
  CHECK_NOTHROW(fit = estimate_cgg(z));
  CHECK(fit.s > 0.0);
  CHECK(linalg::eig(fit.scatter).values.minCoeff() > 0.0);
  CHECK_THROWS_AS(estimate_cgg(z.leftCols(1)), InvalidArgument);
}
