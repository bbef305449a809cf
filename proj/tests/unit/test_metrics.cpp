#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fsl/datakit/episode.hpp"
#include "fsl/error.hpp"
#include "fsl/metrics/hardness.hpp"
#include "fsl/metrics/regression.hpp"
#include "fsl/metrics/stats.hpp"

namespace bb = fsl::backbone;
namespace dk = fsl::datakit;
namespace fm = fsl::metrics;
namespace nd = fsl::ndgrad;
using nd::Tensor;

namespace {

const Tensor kUnitSupports = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
const std::uint32_t kTwoLabels[] = {0, 1};

bb::Backbone identity_backbone(std::size_t dim) {
  Tensor w(nd::Shape{dim, dim}, 0.0);
  for (std::size_t i = 0; i < dim; ++i) w.at(i, i) = 1.0;
  bb::Linear out{{"output.weight", w, false}, {"output.bias", Tensor(nd::Shape{dim}, 0.0), false}};
  return bb::Backbone({dim, {}, dim}, {}, out);
}

// Numeric oracle for the clipped area: midpoint rule on a fine grid.
double integrate_clipped(double a, double b) {
  const double x0 = -a / b;
  const int n = 2'000'000;
  const double h = x0 / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::clamp(a + b * (h * (i + 0.5)), 0.0, 100.0);
  return s * h;
}

}  // namespace

TEST(Hardness, HalfProbabilityGivesZero) {
  const Tensor q = Tensor::matrix({{1.0, 1.0}, {2.0, 2.0}});
  const std::uint32_t ql[] = {0, 1};
  EXPECT_NEAR(fm::hardness(kUnitSupports, kTwoLabels, 2, q, ql).omega, 0.0, 1e-15);
}

TEST(Hardness, TwoWayHandCase) {
  const Tensor q = Tensor::matrix({{1.0, 0.0}});
  const std::uint32_t ql[] = {0};
  const auto s = fm::hardness(kUnitSupports, kTwoLabels, 2, q, ql);
  EXPECT_NEAR(s.omega, -1.0, 1e-9);
  EXPECT_EQ(s.way, 2u);
  EXPECT_FALSE(s.degenerate);
}

TEST(Hardness, ClampBoundsLogOdds) {
  EXPECT_NEAR(fm::misclassification_log_odds(1.0), std::log(1e-12 / (1.0 - 1e-12)), 1e-9);
  EXPECT_NEAR(fm::misclassification_log_odds(1.0), -27.631, 1e-3);
  EXPECT_NEAR(fm::misclassification_log_odds(0.0), 27.631, 1e-3);
  EXPECT_EQ(fm::misclassification_log_odds(0.5), 0.0);
}

TEST(Hardness, InvariantToScaleAndQueryOrder) {
  dk::CounterRng rng(3);
  Tensor s(nd::Shape{6, 4}), q(nd::Shape{9, 4});
  for (double& v : s.data()) v = std::abs(rng.normal());
  for (double& v : q.data()) v = std::abs(rng.normal());
  const std::uint32_t sl[] = {0, 1, 2, 0, 1, 2};
  std::vector<std::uint32_t> ql = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  const double base = fm::hardness(s, sl, 3, q, ql).omega;

  Tensor s2 = s, q2 = q;
  for (double& v : s2.data()) v *= 4.0;
  for (double& v : q2.data()) v *= 0.3;
  EXPECT_NEAR(fm::hardness(s2, sl, 3, q2, ql).omega, base, 1e-12);

  Tensor qr(q.shape());
  std::vector<std::uint32_t> qlr(ql.size());
  for (std::size_t i = 0; i < ql.size(); ++i) {
    const std::size_t j = ql.size() - 1 - i;
    std::copy_n(q.row(j).begin(), 4, qr.row(i).begin());
    qlr[i] = ql[j];
  }
  EXPECT_NEAR(fm::hardness(s, sl, 3, qr, qlr).omega, base, 1e-12);
}

TEST(Hardness, ZeroPrototypeIsFlagged) {
  const Tensor s = Tensor::matrix({{1.0, 0.0}, {0.0, 0.0}});
  const Tensor q = Tensor::matrix({{1.0, 0.0}});
  const std::uint32_t ql[] = {1};
  const auto score = fm::hardness(s, kTwoLabels, 2, q, ql);
  EXPECT_TRUE(score.degenerate);
  EXPECT_TRUE(std::isfinite(score.omega));
}

TEST(Hardness, MoreWaysAreHarder) {
  dk::SyntheticSpec spec;
  spec.n_classes = 30;
  spec.samples_per_class = 30;
  spec.noise_sigma = 1.0;
  spec.seed = 17;
  const auto data = dk::make_synthetic(spec);
  const auto pool = data.class_ids();
  const fm::ReferenceExtractor phi{identity_backbone(spec.dim), {fsl::fewshot::HeadInput::kLogits, false}};
  auto mean_omega = [&](std::uint32_t way) {
    double s = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      auto rng = dk::CounterRng::substream(5, "way" + std::to_string(way), i);
      s += fm::hardness(dk::sample_episode(data, pool, {way, 1, 15}, rng), phi, i).omega;
    }
    return s / 100.0;
  };
  EXPECT_GT(mean_omega(10), mean_omega(5));
}

TEST(Hardness, EpisodeOverloadRecordsMetadata) {
  dk::SyntheticSpec spec;
  spec.dim = 4;
  const auto data = dk::make_synthetic(spec);
  dk::CounterRng rng(1);
  const auto ep = dk::sample_episode(data, data.class_ids(), {5, 2, 3}, rng);
  const fm::ReferenceExtractor phi{identity_backbone(4), {}};
  const auto s = fm::hardness(ep, phi, 42);
  EXPECT_EQ(s.episode, 42u);
  EXPECT_EQ(s.way, 5u);
  EXPECT_EQ(s.support_shot, 2u);
  const fm::ReferenceExtractor wrong{identity_backbone(3), {}};
  EXPECT_THROW(fm::hardness(ep, wrong), fsl::DimensionError);
}

TEST(Summarize, TwoPoints) {
  const double v[] = {0.5, 0.7};
  const auto s = fm::summarize(v);
  EXPECT_EQ(s.n, 2u);
  EXPECT_NEAR(s.mean, 0.6, 1e-12);
  EXPECT_NEAR(s.std, 0.141421, 1e-6);
  EXPECT_NEAR(s.ci95, 0.196000, 1e-6);
}

TEST(Summarize, ConstantAndSingleton) {
  const double c[] = {0.4, 0.4, 0.4, 0.4};
  const auto s = fm::summarize(c);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_EQ(s.ci95, 0.0);
  EXPECT_EQ(s.q75 - s.q25, 0.0);
  const double one[] = {0.9};
  EXPECT_EQ(fm::summarize(one).std, 0.0);
  EXPECT_EQ(fm::summarize(one).median, 0.9);
}

TEST(Summarize, QuantilesAndWhiskers) {
  const double v[] = {0.9, 0.1, 0.2};
  EXPECT_NEAR(fm::summarize(v).median, 0.2, 1e-15);
  const double w[] = {1, 2, 3, 4};
  const auto s = fm::summarize(w);
  EXPECT_NEAR(s.q25, 1.75, 1e-15);
  EXPECT_NEAR(s.q75, 3.25, 1e-15);
  const double outlier[] = {1, 2, 3, 4, 5, 6, 7, 8, 100};
  const auto o = fm::summarize(outlier);
  EXPECT_EQ(o.whisker_high, 8.0);
  EXPECT_EQ(o.whisker_low, 1.0);
  EXPECT_LE(o.q25, o.median);
  EXPECT_LE(o.median, o.q75);
}

TEST(Summarize, PermutationInvariant) {
  std::vector<double> v = {0.31, 0.77, 0.12, 0.95, 0.5, 0.5, 0.66, 0.01};
  const auto a = fm::summarize(v);
  std::reverse(v.begin(), v.end());
  std::rotate(v.begin(), v.begin() + 3, v.end());
  const auto b = fm::summarize(v);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
  EXPECT_EQ(a.median, b.median);
}

TEST(Summarize, EmptyIsContractError) {
  EXPECT_THROW(fm::summarize(std::span<const double>{}), fsl::ContractError);
}

TEST(Fit, ExactLineAndArea) {
  std::vector<fm::HardnessPoint> pts;
  for (double x : {0.0, 1.5, 3.0, 7.0, 9.5}) pts.push_back({x, 100.0 - 10.0 * x});
  const auto fit = fm::fit_hardness_curve(pts);
  EXPECT_NEAR(fit.intercept, 100.0, 1e-9);
  EXPECT_NEAR(fit.slope, -10.0, 1e-9);
  ASSERT_TRUE(fit.area.has_value());
  EXPECT_NEAR(*fit.area, 500.0, 1e-6);
  EXPECT_NEAR(fit.residual_rms, 0.0, 1e-9);
  EXPECT_TRUE(fit.warning.empty());
}

TEST(Fit, FlatSlopeHasUndefinedArea) {
  const fm::HardnessPoint pts[] = {{0.0, 50.0}, {1.0, 50.0}};
  const auto fit = fm::fit_hardness_curve(pts);
  EXPECT_EQ(fit.slope, 0.0);
  EXPECT_FALSE(fit.area.has_value());
  EXPECT_FALSE(fit.warning.empty());
}

TEST(Fit, EqualOmegasAreDegenerate) {
  const fm::HardnessPoint pts[] = {{2.0, 50.0}, {2.0, 70.0}, {2.0, 60.0}};
  EXPECT_THROW(fm::fit_hardness_curve(pts), fsl::DegenerateFitError);
  const fm::HardnessPoint one[] = {{2.0, 50.0}};
  EXPECT_THROW(fm::fit_hardness_curve(one), fsl::ContractError);
}

TEST(Fit, RecoversNoisyLine) {
  dk::CounterRng rng(12);
  std::vector<fm::HardnessPoint> pts;
  for (int i = 0; i < 100; ++i) {
    const double x = -3.0 + 10.0 * rng.uniform();
    pts.push_back({x, 80.0 - 5.0 * x + rng.normal(0.0, 1.0)});
  }
  const auto fit = fm::fit_hardness_curve(pts);
  EXPECT_NEAR(fit.intercept, 80.0, 1.0);
  EXPECT_NEAR(fit.slope, -5.0, 0.5);
  EXPECT_NEAR(fit.residual_rms, 1.0, 0.3);
}

TEST(Area, MatchesNumericIntegration) {
  for (auto [a, b] : {std::pair{100.0, -10.0}, {60.0, -3.0}, {130.0, -7.0}, {250.0, -40.0}}) {
    EXPECT_NEAR(fm::first_quadrant_area(a, b), integrate_clipped(a, b), 1e-4) << a << " " << b;
  }
  EXPECT_EQ(fm::first_quadrant_area(-5.0, -1.0), 0.0);
  EXPECT_THROW(fm::first_quadrant_area(50.0, 0.0), fsl::DomainError);
}

TEST(Correlate, Examples) {
  const fm::HardnessPoint line[] = {{0, 10}, {1, 8}, {2, 6}, {3, 4}};
  EXPECT_NEAR(fm::correlate(line), -1.0, 1e-12);
  const fm::HardnessPoint cross[] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  EXPECT_NEAR(fm::correlate(cross), 0.0, 1e-12);
  const fm::HardnessPoint two[] = {{0, 1}, {1, 2}};
  EXPECT_THROW(fm::correlate(two), fsl::ContractError);
  const fm::HardnessPoint flat[] = {{0, 1}, {1, 1}, {2, 1}};
  EXPECT_THROW(fm::correlate(flat), fsl::ContractError);
}

TEST(Json, BlocksHaveExpectedKeys) {
  const double v[] = {0.5, 0.7};
  const nlohmann::json s = fm::summarize(v);
  for (const char* key : {"n", "mean", "std", "ci95", "median", "q25", "q75"}) {
    EXPECT_TRUE(s.contains(key)) << key;
  }
  const fm::HardnessPoint pts[] = {{0.0, 50.0}, {1.0, 50.0}};
  const nlohmann::json f = fm::fit_hardness_curve(pts);
  EXPECT_TRUE(f.at("area").is_null());
  EXPECT_TRUE(f.contains("warning"));
}
