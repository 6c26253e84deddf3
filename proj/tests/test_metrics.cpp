#include <gtest/gtest.h>

#include <sstream>

#include "dataloops/denoiser.hpp"
#include "dataloops/metrics.hpp"
#include "dataloops/samplers.hpp"
#include "support.hpp"

using namespace dataloops;
using testing_support::mean_se;
using testing_support::random_mixture;

namespace {

const Schedule kEdm(0.002, 80.0);

SampleMatrix column(const std::vector<double>& v) {
  SampleMatrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

SampleMatrix gaussian_cloud(std::size_t n, Eigen::Index d, double shift, Rng& rng) {
  SampleMatrix m(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = (rng.normal_vector(d).array() + shift).matrix().transpose();
  return m;
}

}  // namespace

TEST(W2, OneDimensionalHandCases) {
  EXPECT_DOUBLE_EQ(w2_squared_1d({1, 2, 3}, {3, 1, 2}), 0.0);
  EXPECT_DOUBLE_EQ(w2_squared_1d({0}, {2.5}), 6.25);
  // Unequal sizes: {0, 1} against {0, 0.5, 1, 1}.  Quantile gaps on
  // [0,1/4),[1/4,1/2),[1/2,1): 0, 0.5, 0.
  EXPECT_NEAR(w2_squared_1d({0, 1}, {0, 0.5, 1, 1}), 0.25 * 0.25, 1e-15);
  EXPECT_THROW(w2_squared_1d({}, {1}), DomainError);
}

TEST(SlicedW2, IdenticalSetsGiveZero) {
  Rng rng(1);
  const SampleMatrix a = gaussian_cloud(500, 2, 0.0, rng);
  EXPECT_EQ(sliced_w2(a, a, 64, rng), 0.0);
  const SampleMatrix b = gaussian_cloud(500, 1, 0.0, rng);
  EXPECT_EQ(sliced_w2(b, b, 1, rng), 0.0);
}

TEST(SlicedW2, TranslatedPointMasses) {
  Rng rng(2);
  for (double c : {-3.0, 0.25, 7.0}) EXPECT_DOUBLE_EQ(sliced_w2(column({0.0}), column({c}), 1, rng), std::abs(c));
}

TEST(SlicedW2, UnitShiftedGaussians) {
  Rng rng(3);
  const SampleMatrix a = gaussian_cloud(100000, 1, 0.0, rng), b = gaussian_cloud(100000, 1, 1.0, rng);
  EXPECT_NEAR(sliced_w2(a, b, 1, rng), 1.0, 0.02);
}

TEST(SlicedW2, Errors) {
  Rng rng(4);
  EXPECT_THROW(sliced_w2(SampleMatrix(0, 2), gaussian_cloud(3, 2, 0, rng), 8, rng), DomainError);
  EXPECT_THROW(sliced_w2(gaussian_cloud(3, 1, 0, rng), gaussian_cloud(3, 2, 0, rng), 8, rng), DomainError);
  EXPECT_THROW(sliced_w2(gaussian_cloud(3, 2, 0, rng), gaussian_cloud(3, 2, 0, rng), 0, rng), DomainError);
}

TEST(SlicedW2, SymmetricAndTriangle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const SampleMatrix a = gaussian_cloud(400, 2, rng.uniform(-1, 1), rng);
    const SampleMatrix b = gaussian_cloud(300, 2, rng.uniform(-1, 1), rng);
    const SampleMatrix c = gaussian_cloud(500, 2, rng.uniform(-1, 1), rng);
    // Same directions for every pair, so the three numbers are one sliced metric.
    const auto seed = rng.next_u64();
    auto sw = [&](const SampleMatrix& x, const SampleMatrix& y) {
      Rng r(seed);
      return sliced_w2(x, y, 256, r);
    };
    EXPECT_NEAR(sw(a, b), sw(b, a), 1e-12);
    EXPECT_LE(sw(a, c), sw(a, b) + sw(b, c) + 1e-12);
  }
}

TEST(ConditionalMse, PointMassPosterior) {
  Point c(2);
  c << 0.7, -1.2;
  const AnalyticDenoiser den(GaussianMixture::point_mass(c), kEdm);
  Rng rng(6);
  NoisyDataset d;
  d.dim = 2;
  for (double t : {0.1, 1.0, 5.0, 40.0}) d.samples.push_back({kEdm.add_noise(c, 0.0, t, rng), t, c});
  for (auto kind : {SamplerKind::sde_euler, SamplerKind::ode_heun}) {
    SamplerConfig cfg;
    cfg.kind = kind;
    EXPECT_LT(conditional_mse(den, d, 4, cfg, 7), 1e-4) << to_string(kind);
  }
}

TEST(ConditionalMse, MoreDrawsReduceVariance) {
  const GaussianMixture target({0.5, 0.5}, {Point::Constant(1, -1.0), Point::Constant(1, 1.0)}, {0.1, 0.1});
  const AnalyticDenoiser den(target, kEdm);
  Rng rng(8);
  NoisyDataset d;
  d.dim = 1;
  const SampleMatrix x0 = target.sample(40, rng);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    const Point c = x0.row(i).transpose();
    d.samples.push_back({kEdm.add_noise(c, 0.0, 1.0, rng), 1.0, c});
  }
  SamplerConfig cfg;
  std::vector<double> one, many;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    one.push_back(conditional_mse(den, d, 1, cfg, seed));
    many.push_back(conditional_mse(den, d, 64, cfg, seed));
  }
  auto var = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };
  EXPECT_LT(var(many), var(one));
}

TEST(ConditionalMse, CleanAnchorsNeedNoSampling) {
  NoisyDataset d;
  d.dim = 1;
  d.samples.push_back({Point::Constant(1, 1.0), 0.0, Point::Constant(1, 0.0)});
  d.samples.push_back({Point::Constant(1, 2.0), 0.0, Point::Constant(1, 4.0)});
  d.samples.push_back({Point::Constant(1, 9.0), 3.0, std::nullopt});  // no reference: skipped
  const AnalyticDenoiser den(GaussianMixture::gaussian(Point::Zero(1), 1.0), kEdm);
  EXPECT_DOUBLE_EQ(conditional_mse(den, d, 16, SamplerConfig{}, 0), 2.5);
}

TEST(ConditionalMse, NeedsAReference) {
  NoisyDataset d;
  d.dim = 1;
  d.samples.push_back({Point::Constant(1, 1.0), 2.0, std::nullopt});
  const AnalyticDenoiser den(GaussianMixture::gaussian(Point::Zero(1), 1.0), kEdm);
  EXPECT_THROW(conditional_mse(den, d, 1, SamplerConfig{}, 0), DomainError);
  d.samples.front().clean_ref = Point::Zero(1);
  EXPECT_THROW(conditional_mse(den, d, 0, SamplerConfig{}, 0), DomainError);
}

TEST(ConditionalDistributional, RestoredEqualsReference) {
  Rng rng(9);
  NoisyDataset d;
  d.dim = 2;
  const SampleMatrix ref = gaussian_cloud(200, 2, 0.0, rng);
  for (Eigen::Index i = 0; i < ref.rows(); ++i) d.samples.push_back({ref.row(i).transpose(), 0.0, std::nullopt});
  EXPECT_EQ(conditional_distributional(d, ref, 64, rng), 0.0);
}

TEST(ConditionalDistributional, AnalyticRestorationHelps) {
  const GaussianMixture target({0.5, 0.5}, {Point::Constant(2, -1.5), Point::Constant(2, 1.5)}, {0.05, 0.05});
  const AnalyticDenoiser den(target, kEdm);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const SampleMatrix clean = target.sample(1000, rng);
    NoisyDataset noisy;
    noisy.dim = 2;
    for (Eigen::Index i = 0; i < clean.rows(); ++i)
      noisy.samples.push_back({kEdm.add_noise(clean.row(i).transpose(), 0.0, 1.0, rng), 1.0, std::nullopt});
    SampleMatrix start = noisy.points();
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < noisy.size(); ++i) rngs.push_back(Rng::derive(seed, "restore", {i}));
    NoisyDataset restored = noisy;
    const SampleMatrix back = reverse_rows(den, start, Eigen::VectorXd::Ones(start.rows()),
                                           Eigen::VectorXd::Zero(start.rows()), SamplerConfig{}, rngs);
    for (std::size_t i = 0; i < restored.size(); ++i) restored.samples[i].x = back.row(static_cast<Eigen::Index>(i)).transpose();
    const SampleMatrix ref = target.sample(1000, rng);
    const auto dir_seed = rng.next_u64();
    Rng r1(dir_seed), r2(dir_seed);
    EXPECT_LT(conditional_distributional(restored, ref, 256, r1), conditional_distributional(noisy, ref, 256, r2))
        << "seed " << seed;
  }
}

TEST(LossProfile, BucketsAreLogSpaced) {
  const auto s = bucket_sigmas(0.002, 80.0, 8);
  ASSERT_EQ(s.size(), 8u);
  EXPECT_DOUBLE_EQ(s.front(), 0.002);
  EXPECT_NEAR(s.back(), 80.0, 1e-12);
  for (std::size_t i = 2; i < s.size(); ++i) EXPECT_NEAR(s[i] / s[i - 1], s[1] / s[0], 1e-12);
  EXPECT_THROW(bucket_sigmas(0.002, 80.0, 1), DomainError);
}

TEST(LossProfile, PerfectDenoiserOnPointMass) {
  Point c(2);
  c << -0.4, 2.0;
  const AnalyticDenoiser den(GaussianMixture::point_mass(c), kEdm);
  SampleMatrix clean(3, 2);
  clean << c.transpose(), c.transpose(), c.transpose();
  for (double v : loss_profile(den, clean, bucket_sigmas(0.002, 80.0, 6), 5, 11)) EXPECT_LT(v, 1e-20);
}

TEST(LossProfile, BayesOptimalLowerBound) {
  // Any denoiser's bucket loss is at least the posterior-mean loss.  The
  // competitor here is the posterior mean of a deliberately wrong mixture.
  Rng rng(12);
  const auto sigmas = bucket_sigmas(0.002, 80.0, 8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto truth = random_mixture(rng, 2);
    const auto wrong = random_mixture(rng, 2);
    const SampleMatrix clean = truth.sample(2000, rng);
    const auto seed = rng.next_u64();
    const auto best = loss_profile(AnalyticDenoiser(truth, kEdm), clean, sigmas, 4, seed);
    const auto other = loss_profile(AnalyticDenoiser(wrong, kEdm), clean, sigmas, 4, seed);
    // Paired per-point differences give the standard error of the gap.
    for (std::size_t b = 0; b < sigmas.size(); ++b) {
      std::vector<double> gaps;
      for (Eigen::Index i = 0; i < clean.rows(); ++i) {
        const double sb = sigmas[b];
        double g = 0.0;
        for (std::size_t r = 0; r < 4; ++r) {
          Rng noise = Rng::derive(seed, "loss-profile", {b, static_cast<std::uint64_t>(i), r});
          const Point x = clean.row(i).transpose() + sb * noise.normal_vector(2);
          g += (wrong.posterior_mean(x, sb) - clean.row(i).transpose()).squaredNorm() -
               (truth.posterior_mean(x, sb) - clean.row(i).transpose()).squaredNorm();
        }
        gaps.push_back(g / 4.0);
      }
      const auto g = mean_se(gaps);
      EXPECT_NEAR(g.mean, other[b] - best[b], 1e-9 * (1.0 + std::abs(other[b])));
      EXPECT_GE(other[b], best[b] - 3.0 * g.se) << "bucket " << b;
    }
  }
}

TEST(ReportCsv, SchemaAndDeterminism) {
  std::vector<LoopReport> rows(2);
  for (int l = 0; l < 2; ++l) {
    rows[static_cast<std::size_t>(l)] = {l, 0.1 * (l + 1), 0.2, 0.3, {1.0, 0.5, 0.25}, 400, 42, 1.5};
  }
  std::ostringstream a, b;
  write_report_csv(a, rows, false);
  rows[1].seconds = 99.0;
  write_report_csv(b, rows, false);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "loop,sw2,cond_mse,cond_sw2,bucket_0_loss,bucket_1_loss,bucket_2_loss,seed,seconds");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.10000000000000001,0.20000000000000001,0.29999999999999999,1,0.5,0.25,42,0");
  rows[1].bucket_loss.pop_back();
  std::ostringstream c;
  EXPECT_THROW(write_report_csv(c, rows), DomainError);
}

TEST(ReportCsv, EmptyIsSchemaValid) {
  std::ostringstream os;
  write_report_csv(os, {});
  EXPECT_EQ(os.str(), "loop,sw2,cond_mse,cond_sw2,seed,seconds\n");
}

namespace {

GaussianMixture centered(const GaussianMixture& gm) {
  Point mu = Point::Zero(gm.dim());
  for (std::size_t k = 0; k < gm.size(); ++k) mu += gm.weights()[k] * gm.means()[k];
  std::vector<Point> means = gm.means();
  for (auto& m : means) m -= mu;
  return GaussianMixture(gm.weights(), means, gm.variances());
}

// sliced_w2(generated, fresh truth) against sliced_w2(truth, truth), same directions.
std::pair<double, double> generation_gap(const GaussianMixture& target, const SampleMatrix& gen, std::uint64_t seed) {
  Rng rng(seed);
  const SampleMatrix a = target.sample(static_cast<std::size_t>(gen.rows()), rng);
  const SampleMatrix b = target.sample(static_cast<std::size_t>(gen.rows()), rng);
  Rng r1(seed + 1), r2(seed + 1);
  return {sliced_w2(gen, a, 256, r1), sliced_w2(b, a, 256, r2)};
}

}  // namespace

// Generation starts from N(0, sigma_max^2 I), which is p_T only up to the
// target's mean; with mean zero the remaining mismatch is a 1e-4 relative
// variance error.  At the default 35 evaluations the Heun error alone is
// several times the sampling floor at this sample size, hence 199.
TEST(Generation, AnalyticDenoiserReproducesCenteredTargets) {
  SamplerConfig cfg;
  cfg.kind = SamplerKind::ode_heun;
  cfg.nfe = 199;
  for (std::uint64_t s : {13u, 34u}) {
    Rng rng(s);
    const auto target = centered(random_mixture(rng, 2, 3, 0.1));
    const SampleMatrix gen = generate(AnalyticDenoiser(target, kEdm), 100000, cfg, 14);
    const auto [gap, floor] = generation_gap(target, gen, 1000 + s);
    EXPECT_LT(gap, 1.5 * floor) << "mixture " << s << ": gap " << gap << " floor " << floor;
  }
}

TEST(Generation, ExactTerminalDrawsReproduceOffCenterTarget) {
  Rng rng(34);
  const auto target = random_mixture(rng, 2, 3, 0.1);
  SamplerConfig cfg;
  cfg.kind = SamplerKind::ode_heun;
  cfg.nfe = 199;
  const Eigen::Index n = 100000;
  Rng start(5);
  const SampleMatrix xT = target.noised(kEdm.sigma_max()).sample(static_cast<std::size_t>(n), start);
  const SampleMatrix gen = ode_heun(AnalyticDenoiser(target, kEdm), xT, Eigen::VectorXd::Constant(n, kEdm.horizon()),
                                    Eigen::VectorXd::Zero(n), cfg);
  const auto [gap, floor] = generation_gap(target, gen, 77);
  EXPECT_LT(gap, 1.5 * floor) << "gap " << gap << " floor " << floor;
}

TEST(Generation, MixtureScoreMatchesPointwiseScore) {
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const auto gm = random_mixture(rng, 2);
    const MixtureScore ms(gm, kEdm);
    SampleMatrix x(50, 2);
    Eigen::VectorXd t(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      x.row(i) = 4.0 * rng.normal_vector(2).transpose();
      t[i] = std::exp(rng.uniform(std::log(0.002), std::log(80.0)));
    }
    const SampleMatrix s = ms.score(x, t);
    for (Eigen::Index i = 0; i < 50; ++i) {
      const Point ref = gm.score(x.row(i).transpose(), kEdm.sigma(t[i]));
      EXPECT_LT((s.row(i).transpose() - ref).norm(), 1e-9 * (1.0 + ref.norm()));
    }
  }
}
