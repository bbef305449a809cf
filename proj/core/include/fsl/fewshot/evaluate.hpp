#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsl/backbone/model.hpp"
#include "fsl/datakit/episode.hpp"
#include "fsl/fewshot/adapt.hpp"

namespace fsl::fewshot {

enum class Method { kInitOnly, kFinetune, kTransductive };

inline constexpr Method kAllMethods[] = {Method::kInitOnly, Method::kFinetune,
                                         Method::kTransductive};

/// "init_only", "finetune" or "transductive".
std::string_view to_string(Method method);
/// Throws ConfigError for an unknown name.
Method parse_method(std::string_view name);

struct EpisodeResult {
  Method method = Method::kInitOnly;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::vector<std::uint32_t> predictions;
  /// One probability row per query, in query order.
  std::vector<std::vector<double>> probabilities;
  AdaptTrace trace;
  /// Mean query entropy of the eval-mode predictions before and after adaptation.
  double initial_query_entropy = 0.0;
  double final_query_entropy = 0.0;
  double seconds = 0.0;
};

/// Builds a model from a copy of `model` and the episode supports, adapts it
/// per `method` and classifies the queries. Query labels are used only for
/// scoring, after adaptation.
EpisodeResult evaluate_episode(const backbone::Backbone& model, const datakit::Episode& episode,
                               Method method, const AdaptConfig& config);

void to_json(nlohmann::json& j, const EpisodeResult& r);

}  // namespace fsl::fewshot
