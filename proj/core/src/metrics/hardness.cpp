#include "fsl/metrics/hardness.hpp"

#include <algorithm>
#include <cmath>

#include "fsl/error.hpp"

namespace fsl::metrics {

namespace {

// p and its complement q are clamped separately so that q keeps full
// precision when p is close to 1.
double log_odds(double p, double q) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  q = std::clamp(q, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return std::log(q) - std::log(p);
}

}  // namespace

double misclassification_log_odds(double p) {
  if (std::isnan(p)) throw DomainError("probability is NaN");
  return log_odds(p, 1.0 - p);
}

HardnessScore hardness(const Tensor& support_activations,
                       std::span<const std::uint32_t> support_labels, std::size_t way,
                       const Tensor& query_activations,
                       std::span<const std::uint32_t> query_labels) {
  if (query_activations.rank() != 2 || query_activations.rows() != query_labels.size()) {
    throw DimensionError("query activations and labels disagree in length");
  }
  if (query_labels.empty()) throw ContractError("hardness needs at least one query");
  const auto head = fewshot::head_from_activations(support_activations, support_labels, way);
  const Tensor& w = head.weight.value;
  if (query_activations.cols() != w.cols()) {
    throw DimensionError("query and support embeddings differ in width");
  }

  HardnessScore score;
  score.way = static_cast<std::uint32_t>(way);
  for (std::size_t k = 0; k < way; ++k) {
    auto row = w.row(k);
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) {
      score.degenerate = true;
    }
  }

  const Tensor q = fewshot::l2_normalize_rows(query_activations);
  std::vector<double> logits(way);
  double total = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    if (query_labels[i] >= way) throw ContractError("query label out of range");
    auto x = q.row(i);
    for (std::size_t k = 0; k < way; ++k) {
      auto wk = w.row(k);
      double dot = 0.0;
      for (std::size_t d = 0; d < x.size(); ++d) dot += wk[d] * x[d];
      logits[k] = dot;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double own = 0.0, others = 0.0;
    for (std::size_t k = 0; k < way; ++k) {
      (k == query_labels[i] ? own : others) += std::exp(logits[k] - top);
    }
    total += log_odds(own / (own + others), others / (own + others));
  }
  score.omega = total / static_cast<double>(q.rows());
  return score;
}

HardnessScore hardness(const datakit::Episode& episode, const ReferenceExtractor& phi,
                       std::uint64_t episode_id) {
  if (episode.dim() != phi.backbone.input_dim()) {
    throw DimensionError("episode dim does not match the reference extractor");
  }
  const Tensor s = fewshot::activations(phi.backbone, episode.support.features_tensor(), phi.embed);
  const Tensor q = fewshot::activations(phi.backbone, episode.query.features_tensor(), phi.embed);
  HardnessScore score = hardness(s, episode.support.labels, episode.way, q, episode.query.labels);
  score.episode = episode_id;
  score.support_shot = episode.support_shot;
  return score;
}

}  // namespace fsl::metrics
