#include "fsl/fewshot/evaluate.hpp"

#include <chrono>
#include <string>

#include "fsl/error.hpp"

namespace fsl::fewshot {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kInitOnly: return "init_only";
    case Method::kFinetune: return "finetune";
    case Method::kTransductive: return "transductive";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected init_only, finetune or transductive)");
}

EpisodeResult evaluate_episode(const backbone::Backbone& model, const datakit::Episode& episode,
                               Method method, const AdaptConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  episode.validate();
  if (episode.dim() != model.input_dim()) {
    throw DimensionError("episode dim " + std::to_string(episode.dim()) +
                         " does not match backbone input dim " +
                         std::to_string(model.input_dim()));
  }
  if (episode.query.empty()) throw ContractError("episode has no queries");
  config.validate();

  AdaptedModel adapted = make_adapted_model(model, episode.support, episode.way, config.embed);
  const Tensor queries = episode.query.features_tensor();

  EpisodeResult result;
  result.method = method;
  result.initial_query_entropy =
      mean_row_entropy(head_forward(adapted, queries, config.temperature));
  switch (method) {
    case Method::kInitOnly:
      break;
    case Method::kFinetune: {
      AdaptResult r = finetune(std::move(adapted), episode.support, config);
      adapted = std::move(r.model);
      result.trace = std::move(r.trace);
      break;
    }
    case Method::kTransductive: {
      AdaptResult r = transductive_finetune(std::move(adapted), episode.support, queries, config);
      adapted = std::move(r.model);
      result.trace = std::move(r.trace);
      break;
    }
  }

  const Tensor probs = head_forward(adapted, queries, config.temperature);
  result.final_query_entropy = mean_row_entropy(probs);
  result.predictions = argmax_rows(probs);
  result.probabilities.reserve(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    result.probabilities.emplace_back(row.begin(), row.end());
    result.correct += result.predictions[i] == episode.query.labels[i] ? 1 : 0;
  }
  result.accuracy =
      static_cast<double>(result.correct) / static_cast<double>(episode.query.size());
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void to_json(nlohmann::json& j, const EpisodeResult& r) {
  j = nlohmann::json{{"method", to_string(r.method)},
                     {"accuracy", r.accuracy},
                     {"correct", r.correct},
                     {"predictions", r.predictions},
                     {"probabilities", r.probabilities},
                     {"support_loss", r.trace.support_loss},
                     {"query_entropy", r.trace.query_entropy},
                     {"initial_query_entropy", r.initial_query_entropy},
                     {"final_query_entropy", r.final_query_entropy},
                     {"seconds", r.seconds}};
}

}  // namespace fsl::fewshot
