#include <gtest/gtest.h>

#include <cmath>

#include "dataloops/grid.hpp"
#include "support.hpp"

using namespace dataloops;
using testing_support::random_mixture;

namespace {

Point p1(double v) { return Point::Constant(1, v); }

GaussianMixture two_point() { return GaussianMixture({0.5, 0.5}, {p1(-1.0), p1(1.0)}, {0.0, 0.0}); }

TEST(Mixture, ValidatesWeightsAndVariances) {
  EXPECT_THROW(GaussianMixture({0.5, 0.4}, {p1(0), p1(1)}, {1, 1}), DomainError);
  EXPECT_THROW(GaussianMixture({1.0}, {p1(0)}, {-1.0}), DomainError);
  EXPECT_THROW(GaussianMixture({-0.5, 1.5}, {p1(0), p1(1)}, {1, 1}), DomainError);
  EXPECT_NO_THROW(GaussianMixture({1.0}, {p1(0)}, {0.0}));
}

TEST(Mixture, NoisedAddsVariance) {
  const auto g = GaussianMixture::gaussian(p1(0.0), 1.0);
  EXPECT_EQ(g.noised(0.0).variances(), g.variances());
  EXPECT_DOUBLE_EQ(g.noised(2.0).variances()[0], 5.0);
  const auto pm = GaussianMixture::point_mass(p1(0.0)).noised(1.0);
  EXPECT_DOUBLE_EQ(pm.variances()[0], 1.0);
  EXPECT_EQ(pm.means()[0][0], 0.0);
}

TEST(Mixture, NoisingSemigroupIsExact) {
  // 0.75^2 + 1^2 = 1.25^2, all exact in binary.
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    // Dyadic variances keep every sum exactly representable.
    const auto raw = random_mixture(rng, 2);
    std::vector<double> vars;
    for (double v : raw.variances()) vars.push_back(std::round(v * 64.0) / 64.0);
    const GaussianMixture gm(raw.weights(), raw.means(), vars);
    const auto twice = gm.noised(0.75).noised(1.0);
    const auto once = gm.noised(1.25);
    for (std::size_t k = 0; k < gm.size(); ++k) {
      EXPECT_EQ(twice.variances()[k], once.variances()[k]);
      EXPECT_EQ(twice.means()[k], once.means()[k]);
      EXPECT_EQ(twice.weights()[k], once.weights()[k]);
    }
  }
}

TEST(Mixture, ScoreExamples) {
  EXPECT_DOUBLE_EQ(GaussianMixture::gaussian(p1(0.0), 1.0).score(p1(0.5))[0], -0.5);
  EXPECT_NEAR(two_point().score(p1(0.0), 1.0)[0], 0.0, 1e-15);
  EXPECT_NEAR(two_point().score(p1(1.0), 1.0)[0], std::tanh(1.0) - 1.0, 1e-12);
}

TEST(Mixture, ScoreMatchesFiniteDifferenceOfLogDensity) {
  const auto gm = two_point();
  const double h = 1e-5;
  for (double x : {-2.0, -0.3, 1.0, 2.7}) {
    const double fd = (gm.log_density(p1(x + h), 1.0) - gm.log_density(p1(x - h), 1.0)) / (2 * h);
    EXPECT_NEAR(gm.score(p1(x), 1.0)[0], fd, 1e-8);
  }
}

TEST(Mixture, PointMassMixtureScoreUndefinedAtZeroNoise) {
  EXPECT_THROW(two_point().score(p1(0.0), 0.0), DomainError);
}

TEST(Mixture, PosteriorMeanExamples) {
  EXPECT_NEAR(two_point().posterior_mean(p1(0.0), 1.0)[0], 0.0, 1e-15);
  EXPECT_NEAR(two_point().posterior_mean(p1(1.0), 1.0)[0], 0.7615941559557649, 1e-12);
  const auto pm = GaussianMixture::point_mass(p1(2.5));
  for (double s : {0.0, 0.1, 3.0}) EXPECT_EQ(pm.posterior_mean(p1(-7.0), s)[0], 2.5);
}

TEST(Mixture, PosteriorMeanMatchesQuadratureOfPosteriorIntegral) {
  // E[X0 | X0 + Z = x] for X0 ~ mixture with positive variances, by brute force.
  const GaussianMixture gm({0.3, 0.7}, {p1(-1.0), p1(2.0)}, {0.2, 0.5});
  const double x = 0.4, sigma = 0.8;
  double num = 0.0, den = 0.0;
  const int n = 200000;
  for (int i = 0; i <= n; ++i) {
    const double u = -8.0 + 16.0 * i / n;
    const double prior = testing_support::mixture_pdf_1d({0.3, 0.7}, {-1.0, 2.0}, {0.2, 0.5}, u);
    const double lik = std::exp(-0.5 * (x - u) * (x - u) / (sigma * sigma));
    num += u * prior * lik;
    den += prior * lik;
  }
  EXPECT_NEAR(gm.posterior_mean(p1(x), sigma)[0], num / den, 1e-8);
}

TEST(Mixture, TweedieIdentityOnRandomMixtures) {
  Rng rng(17);
  double worst = 0.0;
  for (int m = 0; m < 20; ++m) {
    const int d = 1 + m % 2;
    const auto gm = random_mixture(rng, d);
    for (int i = 0; i < 100; ++i) {
      Point x(d);
      for (int a = 0; a < d; ++a) x[a] = rng.uniform(-4.0, 4.0);
      const double s = rng.uniform(0.05, 3.0);
      const Point lhs = gm.posterior_mean(x, s);
      const Point rhs = x + s * s * gm.score(x, s);
      worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Mixture, SampleExamples) {
  Rng rng(9);
  const auto pm = GaussianMixture::point_mass(p1(3.0));
  EXPECT_TRUE((pm.sample(50, rng).array() == 3.0).all());

  const auto s = GaussianMixture::gaussian(p1(0.0), 1.0).sample(1'000'000, rng);
  EXPECT_LT(std::abs(s.mean()), 3e-3);

  const GaussianMixture first({1.0, 0.0}, {p1(-5.0), p1(5.0)}, {0.0, 0.0});
  EXPECT_TRUE((first.sample(1000, rng).array() == -5.0).all());
  EXPECT_THROW(first.sample(0, rng), DomainError);
}

TEST(Grid, EvaluatedMixtureHasUnitMass) {
  Rng rng(2);
  for (int d : {1, 2}) {
    const auto gm = random_mixture(rng, d);
    const auto g = GridDensity::evaluate(gm, GridSpec::covering({&gm}));
    EXPECT_NEAR(g.mass(), 1.0, 1e-4);
  }
}

TEST(Grid, TvExamples) {
  const auto a = GaussianMixture::gaussian(p1(0.0), 1.0);
  const auto b = GaussianMixture::gaussian(p1(1.0), 1.0);
  const auto spec = GridSpec::covering({&a, &b});
  const auto ga = GridDensity::evaluate(a, spec), gb = GridDensity::evaluate(b, spec);
  EXPECT_EQ(tv_distance(ga, ga), 0.0);
  EXPECT_NEAR(tv_distance(ga, gb), 2.0 * testing_support::phi_cdf(0.5) - 1.0, 1e-4);

  GridSpec box{1, {0.0, 0.0}, {2.0, 0.0}, 2001};
  std::vector<double> left(box.size(), 0.0), right(box.size(), 0.0);
  for (std::size_t i = 0; i < box.points; ++i) (box.coord(0, i) < 1.0 ? left : right)[i] = 1.0;
  EXPECT_NEAR(tv_distance(GridDensity(box, left).normalized(), GridDensity(box, right).normalized()), 1.0, 1e-12);
}

TEST(Grid, TvRejectsMismatchedGrids) {
  const auto a = GaussianMixture::gaussian(p1(0.0), 1.0);
  const auto g1 = GridDensity::evaluate(a, GridSpec::covering({&a}, 100));
  const auto g2 = GridDensity::evaluate(a, GridSpec::covering({&a}, 101));
  EXPECT_THROW(tv_distance(g1, g2), DomainError);
}

TEST(Grid, KlExamples) {
  for (auto [var, expected] : {std::pair{2.0, 0.25}, std::pair{5.0, 0.1}}) {
    const auto a = GaussianMixture::gaussian(p1(1.0), var);
    const auto b = GaussianMixture::gaussian(p1(0.0), var);
    const auto spec = GridSpec::covering({&a, &b});
    const auto ga = GridDensity::evaluate(a, spec), gb = GridDensity::evaluate(b, spec);
    EXPECT_EQ(kl_divergence(ga, ga), 0.0);
    EXPECT_NEAR(kl_divergence(ga, gb), expected, 1e-4);
  }
}

TEST(Grid, KlRejectsSupportViolation) {
  GridSpec box{1, {0.0, 0.0}, {1.0, 0.0}, 11};
  std::vector<double> a(11, 1.0), b(11, 1.0);
  b[4] = 0.0;
  EXPECT_THROW(kl_divergence(GridDensity(box, a), GridDensity(box, b)), DomainError);
}

TEST(Grid, KdeOfManySamplesApproachesDensity) {
  Rng rng(4);
  const auto gm = GaussianMixture({0.5, 0.5}, {p1(-1.0), p1(1.5)}, {0.3, 0.2});
  const auto spec = GridSpec::covering({&gm});
  const auto kde = GridDensity::from_samples(gm.sample(200000, rng), spec, 0.05);
  EXPECT_LT(tv_distance(kde, GridDensity::evaluate(gm, spec)), 0.02);
}

TEST(Grid, TvContractsUnderNoise) {
  Rng rng(23);
  double worst = -1.0;
  for (int i = 0; i < 50; ++i) {
    const int d = 1 + i % 2;
    const auto p = random_mixture(rng, d), q = random_mixture(rng, d);
    const auto spec0 = GridSpec::covering({&p, &q});
    const double tv0 = tv_distance(GridDensity::evaluate(p, spec0), GridDensity::evaluate(q, spec0));
    for (double s : {0.5, 1.0, 2.0}) {
      const auto pt = p.noised(s), qt = q.noised(s);
      const auto spec = GridSpec::covering({&pt, &qt});
      const double tv = tv_distance(GridDensity::evaluate(pt, spec), GridDensity::evaluate(qt, spec));
      worst = std::max(worst, tv - tv0);
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Mixture, LipschitzOfStandardNormal) {
  // max |phi'| = phi(1) at x = +-1.
  const double expected = std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(GaussianMixture::gaussian(p1(0.0), 1.0).lipschitz_1d(), expected, 1e-6);
}

}  // namespace
