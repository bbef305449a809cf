#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fsl/backbone/pretrain.hpp"
#include "fsl/datakit/episode.hpp"
#include "fsl/error.hpp"
#include "fsl/fewshot/adapt.hpp"
#include "fsl/fewshot/evaluate.hpp"
#include "fsl/fewshot/head.hpp"

namespace bb = fsl::backbone;
namespace dk = fsl::datakit;
namespace fw = fsl::fewshot;
namespace nd = fsl::ndgrad;
using nd::Tensor;

namespace {

// Depth-0 backbone whose logits equal its input.
bb::Backbone identity_backbone(std::size_t dim) {
  Tensor w(nd::Shape{dim, dim}, 0.0);
  for (std::size_t i = 0; i < dim; ++i) w.at(i, i) = 1.0;
  bb::Linear out{{"output.weight", w, false}, {"output.bias", Tensor(nd::Shape{dim}, 0.0), false}};
  return bb::Backbone({dim, {}, dim}, {}, out);
}

struct World {
  dk::Dataset data;
  dk::ClassSplit split;
  bb::Backbone backbone;
};

World make_world(double sigma, double center_scale, std::uint64_t seed) {
  dk::SyntheticSpec spec;
  spec.n_classes = 40;
  spec.samples_per_class = 40;
  spec.noise_sigma = sigma;
  spec.center_scale = center_scale;
  spec.seed = seed;
  auto data = dk::make_synthetic(spec);
  auto split = dk::split_classes(data, {0.6, 0.2, 0.2}, seed);
  bb::PretrainConfig pc;
  pc.hidden = {32, 32};
  pc.cycle_epochs = {4, 8};
  pc.seed = seed;
  auto backbone = bb::pretrain(data, split.train, pc).backbone;
  return {std::move(data), std::move(split), std::move(backbone)};
}

const World& overlapping_world() {
  static const World w = make_world(1.0, 1.0, 21);
  return w;
}

dk::Episode episode_from(const World& w, std::uint64_t index, dk::Protocol p = {5, 1, 15}) {
  auto rng = dk::CounterRng::substream(99, "test-episodes", index);
  return dk::sample_episode(w.data, w.split.test, p, rng);
}

double support_loss_after(const fw::AdaptResult& r) { return r.trace.support_loss.back(); }

}  // namespace

TEST(Embed, WorkedExamples) {
  auto model = identity_backbone(2);
  const fw::EmbedOptions opts;
  const Tensor e = fw::embed(model, Tensor::matrix({{3.0, -4.0}, {-1.0, -2.0}}), opts);
  EXPECT_NEAR(e.at(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(e.at(0, 1), 0.0, 1e-12);
  EXPECT_EQ(e.at(1, 0), 0.0);
  EXPECT_EQ(e.at(1, 1), 0.0);

  const fw::EmbedOptions no_relu{fw::HeadInput::kLogits, false};
  const Tensor raw = fw::embed(model, Tensor::matrix({{3.0, -4.0}}), no_relu);
  EXPECT_NEAR(raw.at(0, 1), -0.8, 1e-12);
}

TEST(Embed, NormsAreZeroOrOne) {
  dk::CounterRng rng(4);
  auto model = bb::Backbone::initialize({6, {8}, 5}, rng);
  // Fresh output weights are N(0, 0.01^2); rescale to trained-logit magnitude
  // so the 1e-12 norm guard is negligible next to |z|^2.
  for (double& w : model.output().weight.value.data()) w *= 100.0;
  Tensor x(nd::Shape{50, 6});
  for (double& v : x.data()) v = rng.normal();
  for (auto input : {fw::HeadInput::kLogits, fw::HeadInput::kFeatures}) {
    const Tensor e = fw::embed(model, x, {input, true});
    EXPECT_EQ(e.cols(), fw::embedding_dim(model, {input, true}));
    for (std::size_t r = 0; r < e.rows(); ++r) {
      double sq = 0;
      for (double v : e.row(r)) sq += v * v;
      const double norm = std::sqrt(sq);
      EXPECT_TRUE(norm == 0.0 || std::abs(norm - 1.0) < 1e-9) << norm;
    }
  }
}

TEST(SupportInit, MeanThenNormalize) {
  const Tensor acts = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}, {0.0, 3.0}});
  const std::uint32_t labels[] = {0, 0, 1};
  const auto head = fw::head_from_activations(acts, labels, 2);
  EXPECT_NEAR(head.weight.value.at(0, 0), 0.70711, 1e-5);
  EXPECT_NEAR(head.weight.value.at(0, 1), 0.70711, 1e-5);
  EXPECT_NEAR(head.weight.value.at(0, 0), 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(head.weight.value.at(1, 1), 1.0, 1e-9);
  for (double b : head.bias.value.data()) EXPECT_EQ(b, 0.0);
}

TEST(SupportInit, MissingClassIsContractError) {
  const Tensor acts = Tensor::matrix({{1.0, 0.0}});
  const std::uint32_t labels[] = {0};
  EXPECT_THROW(fw::head_from_activations(acts, labels, 2), fsl::ContractError);
}

TEST(HeadForward, OrthogonalRowsExample) {
  auto model = identity_backbone(5);
  dk::LabeledBatch support;
  support.dim = 5;
  for (std::uint32_t k = 0; k < 5; ++k) {
    std::vector<double> x(5, 0.0);
    x[k] = 2.0;
    support.push_back(x, k);
  }
  const auto adapted = fw::make_adapted_model(model, support, 5, {});
  const Tensor p = fw::head_forward(adapted, Tensor::matrix({{1.0, 0, 0, 0, 0}}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 4.0), 1e-12);
  EXPECT_NEAR(p[0], 0.404610, 1e-6);
  EXPECT_NEAR(std::accumulate(p.data().begin(), p.data().end(), 0.0), 1.0, 1e-12);

  const Tensor hot = fw::head_forward(adapted, Tensor::matrix({{1.0, 0, 0, 0, 0}}), 1e9);
  for (double v : hot.data()) EXPECT_NEAR(v, 0.2, 1e-8);
}

TEST(HeadForward, ArgmaxTiesAndScaleInvariance) {
  EXPECT_EQ(fw::argmax_rows(Tensor::matrix({{0.2, 0.5, 0.5}, {1, 1, 1}})),
            (std::vector<std::uint32_t>{1, 0}));
  const Tensor z = Tensor::matrix({{0.3, -0.2, 0.9}, {2.0, 1.0, -3.0}});
  Tensor scaled = z;
  for (double& v : scaled.data()) v *= 7.5;
  EXPECT_EQ(fw::argmax_rows(z), fw::argmax_rows(scaled));
}

TEST(SupportInit, OneShotSupportsClassifyAsTheirOwnClass) {
  const auto& w = overlapping_world();
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto ep = episode_from(w, i);
    const auto adapted = fw::make_adapted_model(w.backbone, ep.support, ep.way, {});
    const auto pred = fw::argmax_rows(fw::head_forward(adapted, ep.support.features_tensor()));
    EXPECT_EQ(pred, ep.support.labels) << "episode " << i;
  }
}

TEST(Finetune, ZeroEpochsIsIdentity) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 0);
  const auto init = fw::make_adapted_model(w.backbone, ep.support, ep.way, {});
  fw::AdaptConfig config;
  config.epochs = 0;
  EXPECT_EQ(fw::finetune(init, ep.support, config).model, init);
}

TEST(Finetune, FrozenBackboneIsBitUnchanged) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 1);
  const auto init = fw::make_adapted_model(w.backbone, ep.support, ep.way, {});
  fw::AdaptConfig config;
  config.freeze_backbone = true;
  config.lr = 1e-2;
  const auto r = fw::finetune(init, ep.support, config);
  EXPECT_EQ(r.model.backbone, init.backbone);
  EXPECT_NE(r.model.head.weight.value, init.head.weight.value);
  EXPECT_NE(r.model.head.bias.value, init.head.bias.value);

  config.freeze_backbone = false;
  EXPECT_NE(fw::finetune(init, ep.support, config).model.backbone, init.backbone);
}

TEST(Finetune, SupportLossDoesNotIncrease) {
  const auto& w = overlapping_world();
  fw::AdaptConfig config;
  // One extra epoch so the last trace entry is the loss after 25 updates.
  config.epochs = 26;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto ep = episode_from(w, i);
    const auto r = fw::finetune(fw::make_adapted_model(w.backbone, ep.support, ep.way, {}),
                                ep.support, config);
    EXPECT_LE(support_loss_after(r), r.trace.support_loss.front()) << "episode " << i;
  }
}

TEST(Transductive, SingleQueryWorks) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 2, {5, 1, 1});
  const auto init = fw::make_adapted_model(w.backbone, ep.support, ep.way, {});
  const auto r = fw::transductive_finetune(init, ep.support, ep.query.features_tensor(), {});
  EXPECT_EQ(r.trace.query_entropy.size(), 25u);
  EXPECT_NE(r.model, init);
}

TEST(Transductive, EmptyQueryIsContractError) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 3);
  const auto init = fw::make_adapted_model(w.backbone, ep.support, ep.way, {});
  const Tensor none(nd::Shape{0, w.data.dim()});
  EXPECT_THROW(fw::transductive_finetune(init, ep.support, none, {}), fsl::ContractError);
}

TEST(Transductive, ZeroCoefficientEqualsFinetune) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 4);
  const auto init = fw::make_adapted_model(w.backbone, ep.support, ep.way, {});
  fw::AdaptConfig config;
  config.entropy_coefficient = 0.0;
  const auto a = fw::transductive_finetune(init, ep.support, ep.query.features_tensor(), config);
  const auto b = fw::finetune(init, ep.support, config);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.trace, b.trace);
}

TEST(Transductive, QueryEntropyDropsOnAlmostAllEpisodes) {
  const auto& w = overlapping_world();
  int lower = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const auto ep = episode_from(w, static_cast<std::uint64_t>(i));
    const auto r = fw::evaluate_episode(w.backbone, ep, fw::Method::kTransductive, {});
    lower += r.final_query_entropy < r.initial_query_entropy ? 1 : 0;
  }
  EXPECT_GE(lower, 190);
}

TEST(Transductive, ScaleByLogWayMatchesExplicitCoefficient) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 5);
  const auto init = fw::make_adapted_model(w.backbone, ep.support, ep.way, {});
  fw::AdaptConfig scaled;
  scaled.entropy_scale_by_log_way = true;
  fw::AdaptConfig explicit_coef;
  explicit_coef.entropy_coefficient = 1.0 / std::log(5.0);
  const Tensor q = ep.query.features_tensor();
  const auto a = fw::transductive_finetune(init, ep.support, q, scaled);
  const auto b = fw::transductive_finetune(init, ep.support, q, explicit_coef);
  for (std::size_t i = 0; i < a.model.head.weight.value.size(); ++i) {
    EXPECT_NEAR(a.model.head.weight.value[i], b.model.head.weight.value[i], 1e-12);
  }
}

TEST(Evaluate, SeparatedClustersMatchNearestCentroidOracle) {
  static const World w = make_world(0.05, 3.0, 31);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto ep = episode_from(w, i);
    // Oracle: nearest support in input space classifies every query correctly.
    std::size_t oracle_correct = 0;
    for (std::size_t q = 0; q < ep.query.size(); ++q) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t s = 0; s < ep.support.size(); ++s) {
        double d = 0;
        for (std::size_t k = 0; k < ep.dim(); ++k) {
          const double diff = ep.query.row(q)[k] - ep.support.row(s)[k];
          d += diff * diff;
        }
        if (d < best_d) best_d = d, best = s;
      }
      oracle_correct += ep.support.labels[best] == ep.query.labels[q];
    }
    ASSERT_EQ(oracle_correct, ep.query.size());
    const auto r = fw::evaluate_episode(w.backbone, ep, fw::Method::kInitOnly, {});
    EXPECT_EQ(r.accuracy, 1.0) << "episode " << i;
  }
}

TEST(Evaluate, ResultInvariantsAndDeterminism) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 6);
  for (fw::Method m : fw::kAllMethods) {
    const auto r = fw::evaluate_episode(w.backbone, ep, m, {});
    EXPECT_EQ(r.method, m);
    ASSERT_EQ(r.predictions.size(), ep.query.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
      correct += r.predictions[i] == ep.query.labels[i];
      EXPECT_NEAR(std::accumulate(r.probabilities[i].begin(), r.probabilities[i].end(), 0.0), 1.0,
                  1e-6);
    }
    EXPECT_EQ(r.correct, correct);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / 75.0);
    const auto again = fw::evaluate_episode(w.backbone, ep, m, {});
    EXPECT_EQ(again.probabilities, r.probabilities);
    EXPECT_EQ(again.trace, r.trace);
    const nlohmann::json j = r;
    EXPECT_EQ(j.at("method"), std::string(fw::to_string(m)));
  }
}

TEST(Evaluate, QueryLabelsDoNotInfluenceAdaptation) {
  const auto& w = overlapping_world();
  auto ep = episode_from(w, 7);
  const auto a = fw::evaluate_episode(w.backbone, ep, fw::Method::kTransductive, {});
  for (auto& y : ep.query.labels) y = (y + 1) % ep.way;
  const auto b = fw::evaluate_episode(w.backbone, ep, fw::Method::kTransductive, {});
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.probabilities, b.probabilities);
}

TEST(Evaluate, TransductiveNotWorseThanInitOnAverage) {
  const auto& w = overlapping_world();
  double init = 0, trans = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto ep = episode_from(w, i);
    init += fw::evaluate_episode(w.backbone, ep, fw::Method::kInitOnly, {}).accuracy;
    trans += fw::evaluate_episode(w.backbone, ep, fw::Method::kTransductive, {}).accuracy;
  }
  EXPECT_GE(trans, init);
}

TEST(Evaluate, MethodNames) {
  for (fw::Method m : fw::kAllMethods) EXPECT_EQ(fw::parse_method(fw::to_string(m)), m);
  EXPECT_THROW(fw::parse_method("proto"), fsl::ConfigError);
}

TEST(Evaluate, DimensionMismatchIsExplicit) {
  const auto& w = overlapping_world();
  const auto ep = episode_from(w, 0);
  EXPECT_THROW(fw::evaluate_episode(identity_backbone(3), ep, fw::Method::kInitOnly, {}),
               fsl::DimensionError);
}
