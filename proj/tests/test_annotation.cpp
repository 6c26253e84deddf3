#include <gtest/gtest.h>

#include "dataloops/annotation.hpp"
#include "support.hpp"

using namespace dataloops;
using testing_support::phi_cdf;

namespace {

const Schedule kEdm(0.002, 80.0);

SampleMatrix normal_1d(std::size_t n, double mean, double var, Rng& rng) {
  SampleMatrix m(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = mean + std::sqrt(var) * rng.normal();
  return m;
}

// Bayes accuracy between N(0, v + s^2) and N(delta, v + s^2) with equal priors.
double bayes_accuracy(double delta, double v, double sigma) { return phi_cdf(std::abs(delta) / (2.0 * std::sqrt(v + sigma * sigma))); }

AnnotationConfig small_config() {
  AnnotationConfig cfg;
  cfg.noise_draws = 4;
  return cfg;
}

}  // namespace

TEST(AnnotationConfig, Validation) {
  AnnotationConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.t_grid.size(), 32u);
  EXPECT_DOUBLE_EQ(cfg.t_grid.front(), 0.05);
  EXPECT_DOUBLE_EQ(cfg.t_grid.back(), 80.0);
  cfg.epsilon = 0.5;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg.epsilon = 0.05;
  cfg.t_grid = {1.0, 1.0};
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg.t_grid = {};
  EXPECT_THROW(cfg.validate(), DomainError);
  EXPECT_EQ(annotation_method_from_string("per-sample"), AnnotationMethod::per_sample);
  EXPECT_EQ(feature_map_from_string(to_string(FeatureMap::quadratic)), FeatureMap::quadratic);
  EXPECT_THROW(feature_map_from_string("cubic"), FormatError);
}

TEST(TimeClassifier, IndistinguishableClassesSitAtChance) {
  Rng rng(1);
  const auto cfg = small_config();
  const SampleMatrix a = normal_1d(2000, 0.0, 1.0, rng), b = normal_1d(2000, 0.0, 1.0, rng);
  const auto tc = train_time_classifier(a, b, kEdm, cfg, rng);
  ASSERT_EQ(tc.models.size(), cfg.t_grid.size());
  for (std::size_t i = 0; i < tc.accuracy.size(); ++i)
    EXPECT_NEAR(tc.accuracy[i], 0.5, 3.0 * tc.accuracy_se[i]) << "t = " << tc.t_grid[i];
  EXPECT_DOUBLE_EQ(annotate_fixed(tc, cfg, kEdm).t, cfg.t_grid.front());
}

TEST(TimeClassifier, SeparatedGaussiansAtSmallNoise) {
  Rng rng(2);
  auto cfg = small_config();
  cfg.t_grid = {0.1};
  const auto tc = train_time_classifier(normal_1d(1000, 0.0, 0.01, rng), normal_1d(1000, 3.0, 0.01, rng), kEdm, cfg, rng);
  EXPECT_GT(tc.accuracy[0], 0.95);
  EXPECT_GT(tc.predict(Point::Constant(1, 0.0), 0), 0.9);
  EXPECT_LT(tc.predict(Point::Constant(1, 3.0), 0), 0.1);
}

TEST(TimeClassifier, AccuracyFollowsTheTvCeiling) {
  Rng rng(3);
  const auto cfg = small_config();
  const double delta = 3.0, v = 0.01;
  const auto tc = train_time_classifier(normal_1d(3000, 0.0, v, rng), normal_1d(3000, delta, v, rng), kEdm, cfg, rng);
  for (std::size_t i = 0; i < tc.t_grid.size(); ++i) {
    const double ceiling = bayes_accuracy(delta, v, kEdm.sigma(tc.t_grid[i]));
    // Binomial SE at the oracle rate; the empirical SE is 0 when every
    // held-out point is classified correctly.
    const double se = std::max(tc.accuracy_se[i], 0.5 * std::sqrt(2.0 * ceiling * (1.0 - ceiling) / 600.0)) + 1e-12;
    EXPECT_LE(tc.accuracy[i], ceiling + 3.0 * se) << "t = " << tc.t_grid[i];
    // Linear boundaries are Bayes-optimal for equal-variance Gaussians.
    EXPECT_GE(tc.accuracy[i], ceiling - 3.0 * se) << "t = " << tc.t_grid[i];
    for (std::size_t j = 0; j < i; ++j)
      EXPECT_LE(tc.accuracy[i], tc.accuracy[j] + 3.0 * std::hypot(tc.accuracy_se[i], tc.accuracy_se[j]));
  }
}

TEST(TimeClassifier, Errors) {
  Rng rng(4);
  const auto cfg = small_config();
  EXPECT_THROW(train_time_classifier(SampleMatrix::Zero(10, 1), SampleMatrix::Zero(10, 2), kEdm, cfg, rng), DomainError);
  EXPECT_THROW(train_time_classifier(SampleMatrix::Zero(0, 1), SampleMatrix::Zero(10, 1), kEdm, cfg, rng), DomainError);
}

TEST(AnnotateFixed, MatchesTheTvOracle) {
  Rng rng(5);
  auto cfg = small_config();
  const double delta = 3.0, v = 0.01;
  const auto tc =
      train_time_classifier(normal_1d(10000, 0.0, v, rng), normal_1d(10000, delta, v, rng), kEdm, cfg, rng);
  std::size_t expect = cfg.t_grid.size();
  for (std::size_t i = 0; i < cfg.t_grid.size() && expect == cfg.t_grid.size(); ++i)
    if (bayes_accuracy(delta, v, kEdm.sigma(cfg.t_grid[i])) <= 0.5 + cfg.epsilon) expect = i;
  ASSERT_LT(expect, cfg.t_grid.size());
  // Accept a neighbour only where the oracle itself is within estimation
  // noise of the threshold.
  std::vector<double> accepted{cfg.t_grid[expect]};
  const double se = tc.accuracy_se[expect];
  if (expect > 0 && bayes_accuracy(delta, v, kEdm.sigma(cfg.t_grid[expect - 1])) <= 0.5 + cfg.epsilon + 3 * se)
    accepted.push_back(cfg.t_grid[expect - 1]);
  if (expect + 1 < cfg.t_grid.size() && bayes_accuracy(delta, v, kEdm.sigma(cfg.t_grid[expect])) >= 0.5 + cfg.epsilon - 3 * se)
    accepted.push_back(cfg.t_grid[expect + 1]);
  const auto got = annotate_fixed(tc, cfg, kEdm);
  EXPECT_FALSE(got.fell_back_to_horizon);
  EXPECT_NE(std::find(accepted.begin(), accepted.end(), got.t), accepted.end())
      << "got " << got.t << ", oracle " << cfg.t_grid[expect];
}

TEST(AnnotateFixed, VacuousSlackAndFallback) {
  Rng rng(6);
  auto cfg = small_config();
  // Overlapping classes: the classifier is never perfect, so a slack close
  // to 1/2 admits the first grid time.
  const auto tc = train_time_classifier(normal_1d(500, 0.0, 1.0, rng), normal_1d(500, 0.5, 1.0, rng), kEdm, cfg, rng);
  cfg.epsilon = 0.49;
  EXPECT_DOUBLE_EQ(annotate_fixed(tc, cfg, kEdm).t, cfg.t_grid.front());
  // A grid that stops before the classes blend.
  auto short_cfg = small_config();
  short_cfg.t_grid = {0.05, 0.1, 0.2};
  const auto tc2 =
      train_time_classifier(normal_1d(500, 0.0, 0.01, rng), normal_1d(500, 3.0, 0.01, rng), kEdm, short_cfg, rng);
  const auto a = annotate_fixed(tc2, short_cfg, kEdm);
  EXPECT_TRUE(a.fell_back_to_horizon);
  EXPECT_DOUBLE_EQ(a.t, kEdm.horizon());
}

TEST(AnnotateFixed, NonDecreasingInSeparation) {
  Rng rng(7);
  const auto cfg = small_config();
  double previous = 0.0;
  for (double delta : {0.25, 1.0, 4.0, 16.0}) {
    const auto tc =
        train_time_classifier(normal_1d(3000, 0.0, 0.01, rng), normal_1d(3000, delta, 0.01, rng), kEdm, cfg, rng);
    const double t = annotate_fixed(tc, cfg, kEdm).t;
    EXPECT_GE(t, previous) << "delta = " << delta;
    previous = t;
  }
}

TEST(AnnotatePerSample, InDistributionAndOutliers) {
  Rng rng(8);
  auto cfg = small_config();
  const auto tc = train_time_classifier(normal_1d(2000, 0.0, 0.01, rng), normal_1d(2000, 3.0, 0.01, rng), kEdm, cfg, rng);
  cfg.noise_draws = 64;
  Rng q(9);
  EXPECT_DOUBLE_EQ(annotate_per_sample(tc, Point::Constant(1, 0.02), kEdm, cfg, q).t, cfg.t_grid.front());
  // Same noise draws per query, so outlyingness is the only thing changing.
  double previous = 0.0;
  for (double y : {3.0, 4.0, 6.0, 10.0, 20.0}) {
    Rng r(10);
    const double t = annotate_per_sample(tc, Point::Constant(1, y), kEdm, cfg, r).t;
    EXPECT_GE(t, previous) << "y = " << y;
    if (y > 3.0) {
      EXPECT_GT(t, cfg.t_grid.front());
    }
    previous = t;
  }
  Rng r1(10), r2(10);
  EXPECT_GT(annotate_per_sample(tc, Point::Constant(1, 10.0), kEdm, cfg, r1).t,
            annotate_per_sample(tc, Point::Constant(1, 3.0), kEdm, cfg, r2).t);
}

TEST(AnnotatePerSample, VacuousSlack) {
  Rng rng(11);
  auto cfg = small_config();
  const auto tc = train_time_classifier(normal_1d(1000, 0.0, 1.0, rng), normal_1d(1000, 0.5, 1.0, rng), kEdm, cfg, rng);
  cfg.epsilon = 0.49;
  EXPECT_DOUBLE_EQ(annotate_per_sample(tc, Point::Constant(1, 0.5), kEdm, cfg, rng).t, cfg.t_grid.front());
  EXPECT_THROW(annotate_per_sample(tc, Point::Zero(2), kEdm, cfg, rng), DomainError);
}

TEST(QuadraticFeatures, SeparateRadialCorruption) {
  // Shrinking a centred ring toward the origin leaves the mean unchanged, so
  // only the quadratic features can tell the classes apart.
  Rng rng(12);
  SampleMatrix clean(2000, 2), corrupt(2000, 2);
  for (Eigen::Index i = 0; i < 2000; ++i) {
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    clean.row(i) << 2.0 * std::cos(a), 2.0 * std::sin(a);
    corrupt.row(i) = 0.5 * clean.row(i) + 0.05 * rng.normal_vector(2).transpose();
  }
  auto cfg = small_config();
  cfg.t_grid = {0.05};
  const auto linear = train_time_classifier(clean, corrupt, kEdm, cfg, rng);
  cfg.features = FeatureMap::quadratic;
  const auto quadratic = train_time_classifier(clean, corrupt, kEdm, cfg, rng);
  EXPECT_LT(linear.accuracy[0], 0.6);
  EXPECT_GT(quadratic.accuracy[0], 0.99);
  EXPECT_EQ(feature_vector(Point::Ones(3), FeatureMap::quadratic).size(), 9);
}

TEST(BuildNoisyDataset, Bookkeeping) {
  Rng rng(13);
  const SampleMatrix clean = normal_1d(5, 0.0, 1.0, rng);
  const NoisyDataset only_clean = build_noisy_dataset(clean, SampleMatrix(0, 1), {}, kEdm, rng);
  EXPECT_EQ(only_clean.size(), 5u);
  EXPECT_EQ(only_clean.clean_count(), 5u);
  const SampleMatrix corrupt = normal_1d(7, 3.0, 1.0, rng), refs = normal_1d(7, 0.0, 1.0, rng);
  const NoisyDataset d = build_noisy_dataset(clean, corrupt, std::vector<double>(7, 1.5), kEdm, rng, refs);
  EXPECT_EQ(d.size(), 12u);
  EXPECT_EQ(d.clean_count(), 5u);
  for (std::size_t i = 5; i < d.size(); ++i) {
    EXPECT_DOUBLE_EQ(d.samples[i].t_anchor, 1.5);
    EXPECT_EQ(*d.samples[i].clean_ref, refs.row(static_cast<Eigen::Index>(i - 5)).transpose());
  }
  EXPECT_THROW(build_noisy_dataset(clean, corrupt, std::vector<double>(6, 1.5), kEdm, rng), DomainError);
  EXPECT_FALSE(build_noisy_dataset(clean, corrupt, std::vector<double>(7, 1.5), kEdm, rng).samples[6].clean_ref);
}

TEST(BuildNoisyDataset, AddedVarianceMatchesTheAnchor) {
  Rng rng(14);
  const std::size_t n = 100000;
  const SampleMatrix corrupt = normal_1d(n, 2.0, 0.3, rng);
  const double t = 0.7;
  const NoisyDataset d = build_noisy_dataset(SampleMatrix(0, 1), corrupt, std::vector<double>(n, t), kEdm, rng);
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = d.samples[i].x[0] - corrupt(static_cast<Eigen::Index>(i), 0);
  double mean = 0;
  for (double x : diff) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (diff[i] - mean) * (diff[i] - mean);
  const auto est = testing_support::mean_se(sq);
  EXPECT_NEAR(est.mean, kEdm.sigma(t) * kEdm.sigma(t), 3.0 * est.se);
}
