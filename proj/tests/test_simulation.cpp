#include "doctest.h"

#include <tbb/global_control.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "s2s/errors.hpp"
#include "s2s/linalg.hpp"
#include "s2s/phase_linking.hpp"
#include "s2s/simulation.hpp"

using namespace s2s;

namespace {

// P(X <= x) for X = 1 / Y, Y ~ Gamma(2, 1): P(Y >= 1/x) = (1 + 1/x) exp(-1/x).
double inv_gamma2_cdf(double x) { return (1.0 + 1.0 / x) * std::exp(-1.0 / x); }

double bisect_quantile(double p) {
  double lo = 1e-6, hi = 1e3;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (inv_gamma2_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SceneSpec single_class_scene(int rows, int cols, int n, double xi, double sigma2) {
  SceneSpec s;
  s.n_acquisitions = n;
  s.rows = rows;
  s.cols = cols;
  s.classes = {{5.0, 0.2, xi, sigma2}};
  s.labels.assign(std::size_t(rows) * cols, 0);
  return s;
}

}  // namespace

TEST_CASE("exponential coherence examples") {
  const CoherenceMatrix g = exp_coherence_matrix(6, 2.0, 2.0, 0.2);
  CHECK(g.matrix()(3, 3).real() == 1.0);
  // dt |i - j| = 4 with tau 2.
  CHECK(g.matrix()(0, 2).real() == doctest::Approx(0.2 + 0.8 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(g.matrix()(0, 2).real() == doctest::Approx(0.4943).epsilon(1e-4));
  const CoherenceMatrix far = exp_coherence_matrix(2, 1e6, 1.0, 0.3);
  CHECK(far.matrix()(0, 1).real() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(far.matrix()(0, 1).imag() == 0.0);

  CHECK_THROWS_AS(exp_coherence_matrix(0, 1.0, 1.0, 0.1), InvalidArgument);
  CHECK_THROWS_AS(exp_coherence_matrix(3, 1.0, 0.0, 0.1), InvalidArgument);
  CHECK_THROWS_AS(exp_coherence_matrix(3, 1.0, 1.0, 1.5), InvalidArgument);
}

TEST_CASE("exponential coherence is PSD over a parameter sweep") {
  for (Index n : {2, 5, 20, 40})
    for (double tau : {0.1, 1.0, 5.0, 20.0, 1e4})
      for (double p : {0.0, 0.1, 0.5, 1.0})
        for (double dt : {0.5, 1.0, 3.0}) {
          const CoherenceMatrix g = exp_coherence_matrix(n, dt, tau, p);
          CHECK(linalg::eig(g.matrix()).values(0) >= -1e-10);
        }
}

TEST_CASE("class powers match the reciprocal-Gamma percentiles") {
  check_class_power_constants();
  const auto q = reciprocal_gamma_percentiles();
  const double p[] = {0.1, 0.5, 0.9};
  for (int k = 0; k < 3; ++k) {
    CHECK(q[k] == doctest::Approx(bisect_quantile(p[k])).epsilon(1e-9));
    CHECK(std::abs(q[k] - kClassPower[k]) < 1e-4);
  }
}

TEST_CASE("scene validation lists every offending field") {
  SceneSpec s = default_scene();
  s.classes[1].p_const = 2.0;
  s.classes[2].sigma2 = -1.0;
  s.labels.pop_back();
  try {
    s.validate();
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("classes[1].p_const") != std::string::npos);
    CHECK(msg.find("classes[2].sigma2") != std::string::npos);
    CHECK(msg.find("labels has") != std::string::npos);
  }
  SceneSpec t = default_scene();
  t.labels[5] = 7;
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
}

TEST_CASE("default scene layout") {
  const SceneSpec s = default_scene();
  CHECK(s.n_acquisitions == 20);
  CHECK(s.rows == 100);
  CHECK(s.classes.size() == 3);
  CHECK(s.classes[0].sigma2 == 0.2571);
  CHECK(s.classes[1].sigma2 == 0.5958);
  CHECK(s.classes[2].sigma2 == 1.8804);
  CHECK(s.classes[0].xi == 0.3);
  CHECK(s.classes[1].xi == 0.6);
  CHECK(s.classes[2].xi == 0.0);
  CHECK(s.labels[0] == 0);
  CHECK(s.labels[99] == 1);
  CHECK(s.labels[50 * 100 + 50] == 2);
  const SceneSpec p = default_scene(true);
  CHECK(p.n_acquisitions == 30);
  CHECK(p.rows == 200);
}

TEST_CASE("generated scenes are reproducible for any thread count") {
  SceneSpec s = default_scene();
  s.rows = s.cols = 40;
  s.labels = default_label_map(40, 40);
  s.seed = 99;
  Scene a, b;
  {
    tbb::global_control one(tbb::global_control::max_allowed_parallelism, 1);
    a = gen_scene(s);
  }
  {
    tbb::global_control many(tbb::global_control::max_allowed_parallelism, 8);
    b = gen_scene(s);
  }
  REQUIRE(a.stack.data.size() == b.stack.data.size());
  CHECK(std::equal(a.stack.data.begin(), a.stack.data.end(), b.stack.data.begin()));
  CHECK(a.truth.phases.data == b.truth.phases.data);
  s.seed = 100;
  const Scene c = gen_scene(s);
  CHECK_FALSE(std::equal(a.stack.data.begin(), a.stack.data.end(), c.stack.data.begin()));
}

TEST_CASE("truth phases follow the deformation ramp") {
  SceneSpec s = default_scene();
  const Scene sc = gen_scene(s);
  for (int r : {0, 37, 99})
    for (int c : {0, 50, 99}) {
      CHECK(sc.truth.phases.at(0, r, c) == 0.0);
      const double last = wrap_phase(s.deformation.final_phase(r, c, s.rows, s.cols));
      CHECK(std::abs(wrap_phase(sc.truth.phases.at(s.n_acquisitions - 1, r, c) - last)) < 1e-12);
    }
}

TEST_CASE("zero deformation gives zero interferometric phase") {
  SceneSpec s = single_class_scene(60, 60, 5, 0.3, 1.0);
  s.deformation.coeffs.fill(0.0);
  const Scene sc = gen_scene(s);
  CHECK(*std::max_element(sc.truth.phases.data.begin(), sc.truth.phases.data.end()) == 0.0);
  CHECK(*std::min_element(sc.truth.phases.data.begin(), sc.truth.phases.data.end()) == 0.0);
  CMatrix z(5, 3600);
  for (int r = 0; r < 60; ++r)
    for (int c = 0; c < 60; ++c) z.col(r * 60 + c) = sc.stack.pixel(r, c);
  const CMatrix scm = linalg::sample_covariance(z);
  // Off-diagonal phases of the SCM: |arg| ~ O(1 / sqrt(L |Gamma|^2)).
  for (Index i = 0; i < 5; ++i)
    for (Index j = i + 1; j < 5; ++j) CHECK(std::abs(std::arg(scm(i, j))) < 0.1);
}

TEST_CASE("Gaussian class intensities are exponential") {
  // xi = 0: |z_k|^2 / sigma2 ~ Exp(1). One-sample KS at the 1% level.
  const double sigma2 = 0.5958;
  const SceneSpec s = single_class_scene(320, 320, 3, 0.0, sigma2);
  const Scene sc = gen_scene(s);
  std::vector<double> x;
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c) x.push_back(std::norm(std::complex<double>(sc.stack.at(1, r, c))) / sigma2);
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 1.0 - std::exp(-x[i]);
    d = std::max({d, std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)});
  }
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("per-class mean power equals sigma2") {
  const Scene sc = gen_scene(default_scene());
  const SceneSpec s = default_scene();
  std::vector<double> acc(3, 0.0);
  std::vector<double> cnt(3, 0.0);
  for (int b = 0; b < s.n_acquisitions; ++b)
    for (int r = 0; r < s.rows; ++r)
      for (int c = 0; c < s.cols; ++c) {
        const int l = s.labels[std::size_t(r) * s.cols + c];
        acc[l] += std::norm(std::complex<double>(sc.stack.at(b, r, c)));
        cnt[l] += 1.0;
      }
  for (int l = 0; l < 3; ++l) CHECK(acc[l] / cnt[l] == doctest::Approx(s.classes[l].sigma2).epsilon(0.05));
}

TEST_CASE("K-texture power is unit mean at 1e6 draws") {
  Rng rng = make_stream(11);
  for (double xi : {0.3, 0.6}) {
    double acc = 0.0;
    const int draws = 1000000;
    for (int i = 0; i < draws; ++i) {
      const double r = sample_magnitude(KTexture{xi}, 4, rng);
      acc += r * r / 4.0;
    }
    CHECK(acc / draws == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("rmse_per_acquisition examples and brute-force oracle") {
  Raster truth(4, 5, 6);
  Rng rng = make_stream(12);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  for (double& v : truth.data) v = u(rng);
  CHECK(rmse_per_acquisition(truth, truth).cwiseAbs().maxCoeff() == 0.0);

  Raster shifted = truth;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) shifted.at(2, r, c) = truth.at(2, r, c) + std::numbers::pi / 4;
  const RVector e = rmse_per_acquisition(shifted, truth);
  CHECK(e(2) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-12));
  CHECK(e(0) == 0.0);
  CHECK(e(3) == 0.0);

  Raster est(4, 5, 6);
  for (double& v : est.data) v = u(rng);
  const RVector got = rmse_per_acquisition(est, truth);
  for (int b = 0; b < 4; ++b) {
    double acc = 0.0;
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 6; ++c) {
        double d = std::fmod(est.at(b, r, c) - truth.at(b, r, c), 2.0 * std::numbers::pi);
        if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
        if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
        acc += d * d;
      }
    CHECK(std::abs(got(b) - std::sqrt(acc / 30.0)) < 1e-12);
  }
  std::vector<char> mask(30, 0);
  mask[7] = 1;
  CHECK(rmse_per_acquisition(est, truth, &mask)(1) ==
        doctest::Approx(std::abs(wrap_phase(est.at(1, 1, 1) - truth.at(1, 1, 1)))));
  CHECK_THROWS_AS(rmse_per_acquisition(Raster(3, 5, 6), truth), InvalidArgument);
}

TEST_CASE("power experiment: size at the null point") {
  PowerSetup ps;
  ps.n_trials = 4000;
  ps.seed = 21;
  for (Sidedness sd : {Sidedness::right, Sidedness::two}) {
    ps.sided = sd;
    const auto pts = power_experiment({5.0, 0.2}, {{5.0, 0.2}}, ps);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].gap == 0.0);
    // 99.9% binomial interval around 0.05 at n = 4000.
    const double half = 3.29 * std::sqrt(0.05 * 0.95 / ps.n_trials);
    CHECK(std::abs(pts[0].power - 0.05) < half + 0.005);
  }
}

TEST_CASE("power experiment: paper structure") {
  const auto grid = default_power_grid();
  PowerSetup ps;
  ps.seed = 22;
  ps.sided = Sidedness::right;
  const auto low_right = power_experiment({1.0, 0.1}, grid, ps);
  for (const auto& p : low_right) CHECK(p.power < 0.1);

  const auto high_right = power_experiment({20.0, 0.3}, grid, ps);
  ps.sided = Sidedness::two;
  const auto high_two = power_experiment({20.0, 0.3}, grid, ps);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    // Equal within MC noise at the null corner.
    CHECK(high_right[k].power >= high_two[k].power - 0.02);
  }
  // Largest gap is the most powerful point.
  const auto far = std::max_element(high_right.begin(), high_right.end(),
                                    [](const PowerPoint& a, const PowerPoint& b) { return a.gap < b.gap; });
  CHECK(far->power > 0.9);
}

TEST_CASE("s grid trends") {
  SGridSetup sg;
  sg.n_list = {5, 30};
  sg.xi_list = {0.0, 0.3, 0.6};
  sg.samples_per_cell = 3000;
  sg.repeats = 3;
  sg.seed = 23;
  const auto cells = s_grid_experiment(sg);
  REQUIRE(cells.size() == 6);
  auto at = [&](Index n, double xi) {
    for (const auto& c : cells)
      if (c.n == n && c.xi == xi) return c.median_s;
    return -1.0;
  };
  CHECK(at(5, 0.0) > 0.85);
  CHECK(at(5, 0.0) < 1.15);
  CHECK(at(30, 0.0) > 0.85);
  CHECK(at(30, 0.0) < 1.15);
  CHECK(at(30, 0.0) > at(30, 0.3));
  CHECK(at(30, 0.3) > at(30, 0.6));
  CHECK(at(30, 0.6) <= at(5, 0.6));
  CHECK_THROWS_AS(s_grid_experiment(SGridSetup{{}, {0.0}}), InvalidArgument);
}
