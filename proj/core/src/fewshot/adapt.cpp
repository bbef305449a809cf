#include "fsl/fewshot/adapt.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "fsl/error.hpp"
#include "fsl/ndgrad/ops.hpp"

namespace fsl::fewshot {

namespace nd = ndgrad;

void AdaptConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("adaptation lr must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive");
  }
  if (!(entropy_coefficient >= 0.0) || !std::isfinite(entropy_coefficient)) {
    throw ConfigError("entropy coefficient must be non-negative");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0) || !(adam.weight_decay >= 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

namespace {

Tensor one_hot(std::span<const std::uint32_t> labels, std::size_t way) {
  Tensor t(nd::Shape{labels.size(), way}, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) t.at(i, labels[i]) = 1.0;
  return t;
}

class Adapter {
 public:
  Adapter(AdaptedModel& model, const AdaptConfig& config)
      : model_(model),
        config_(config),
        params_(model.parameters(!config.freeze_backbone)),
        optimizer_(nd::OptimizerState::adam(config.adam)) {}

  /// One Adam step on `objective`; returns the objective value before the step.
  template <typename Objective>
  double step(std::size_t epoch, const char* what, Objective&& objective) {
    try {
      nd::Graph g;
      backbone::ParameterBinder binder(g);
      if (config_.freeze_backbone) {
        for (const Parameter* p : std::as_const(model_.backbone).parameters()) binder.freeze(*p);
      }
      Var loss = objective(binder);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + what);
      const auto grads = binder.gradients(params_, g.backward(loss));
      optimizer_.step(params_, grads, config_.lr);
      return value;
    } catch (const NumericError& err) {
      throw AdaptationError("adaptation diverged in epoch " + std::to_string(epoch) + " (" +
                            what + "): " + err.what());
    }
  }

  double support_step(std::size_t epoch, const Tensor& x, const Tensor& targets) {
    return step(epoch, "support loss", [&](backbone::ParameterBinder& binder) {
      Var logits = head_logits(binder, model_, binder.graph().constant(x), NormMode::kBatchStats,
                               config_.temperature);
      return nd::soft_cross_entropy(logits, targets);
    });
  }

  /// Returns the unweighted mean entropy.
  double query_step(std::size_t epoch, const Tensor& x) {
    const double weight =
        config_.entropy_coefficient *
        (config_.entropy_scale_by_log_way && model_.head.way() > 1
             ? 1.0 / std::log(static_cast<double>(model_.head.way()))
             : 1.0);
    const double weighted = step(epoch, "query entropy", [&](backbone::ParameterBinder& binder) {
      Var logits = head_logits(binder, model_, binder.graph().constant(x), NormMode::kBatchStats,
                               config_.temperature);
      return nd::scale(nd::mean(nd::softmax_entropy_rows(logits)), weight);
    });
    return weighted / weight;
  }

 private:
  AdaptedModel& model_;
  const AdaptConfig& config_;
  std::vector<Parameter*> params_;
  nd::OptimizerState optimizer_;
};

void check_support(const AdaptedModel& model, const datakit::LabeledBatch& support) {
  if (support.empty()) throw ContractError("adaptation needs a non-empty support set");
  if (support.dim != model.backbone.input_dim()) {
    throw DimensionError("support features do not match the backbone input");
  }
  for (auto y : support.labels) {
    if (y >= model.head.way()) throw ContractError("support label out of range for the head");
  }
}

}  // namespace

AdaptResult finetune(AdaptedModel model, const datakit::LabeledBatch& support,
                     const AdaptConfig& config) {
  config.validate();
  check_support(model, support);
  const Tensor x = support.features_tensor();
  const Tensor targets = one_hot(support.labels, model.head.way());
  AdaptTrace trace;
  Adapter adapter(model, config);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    trace.support_loss.push_back(adapter.support_step(epoch, x, targets));
  }
  return AdaptResult{std::move(model), std::move(trace)};
}

AdaptResult transductive_finetune(AdaptedModel model, const datakit::LabeledBatch& support,
                                  const Tensor& query_inputs, const AdaptConfig& config) {
  config.validate();
  check_support(model, support);
  if (query_inputs.rank() != 2 || query_inputs.cols() != model.backbone.input_dim()) {
    throw DimensionError("query features do not match the backbone input");
  }
  if (config.entropy_coefficient == 0.0) return finetune(std::move(model), support, config);
  if (query_inputs.rows() == 0) throw ContractError("transductive adaptation needs at least one query; use finetune() without queries");

  const Tensor x = support.features_tensor();
  const Tensor targets = one_hot(support.labels, model.head.way());
  AdaptTrace trace;
  Adapter adapter(model, config);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.order == UpdateOrder::kSupportThenQuery) {
      trace.support_loss.push_back(adapter.support_step(epoch, x, targets));
      trace.query_entropy.push_back(adapter.query_step(epoch, query_inputs));
    } else {
      trace.query_entropy.push_back(adapter.query_step(epoch, query_inputs));
      trace.support_loss.push_back(adapter.support_step(epoch, x, targets));
    }
  }
  return AdaptResult{std::move(model), std::move(trace)};
}

}  // namespace fsl::fewshot
