#pragma once

#include <cstdint>
#include <span>

#include "fsl/backbone/model.hpp"
#include "fsl/datakit/episode.hpp"
#include "fsl/fewshot/head.hpp"

namespace fsl::metrics {

using ndgrad::Tensor;

/// Log-odds probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp].
inline constexpr double kProbabilityClamp = 1e-12;

/// Fixed feature generator used to score episode difficulty. It should be
/// trained on classes disjoint from the scored episodes.
struct ReferenceExtractor {
  backbone::Backbone backbone;
  fewshot::EmbedOptions embed;
};

/// log((1 - p) / p) with p clamped to [kProbabilityClamp, 1 - kProbabilityClamp].
double misclassification_log_odds(double p);

struct HardnessScore {
  double omega = 0.0;
  std::uint64_t episode = 0;
  std::uint32_t way = 0;
  std::uint32_t support_shot = 0;
  /// Some class prototype was the zero vector (all its supports embed to zero).
  bool degenerate = false;
};

/// Mean over queries of log((1 - p(y|x)) / p(y|x)), where p = softmax(W x^)
/// with W the support-mean prototypes and x^ the normalized query embedding.
/// Activations are raw per-sample extractor outputs (ReLU already applied
/// if wanted); both prototypes and queries are L2-normalized here.
HardnessScore hardness(const Tensor& support_activations,
                       std::span<const std::uint32_t> support_labels, std::size_t way,
                       const Tensor& query_activations,
                       std::span<const std::uint32_t> query_labels);

HardnessScore hardness(const datakit::Episode& episode, const ReferenceExtractor& phi,
                       std::uint64_t episode_id = 0);

}  // namespace fsl::metrics
