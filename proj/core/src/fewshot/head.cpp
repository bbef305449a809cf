#include "fsl/fewshot/head.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsl/error.hpp"
#include "fsl/ndgrad/ops.hpp"

namespace fsl::fewshot {

namespace nd = ndgrad;

std::vector<Parameter*> AdaptedModel::parameters(bool include_backbone) {
  std::vector<Parameter*> out;
  if (include_backbone) out = backbone.parameters();
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

std::size_t embedding_dim(const Backbone& model, const EmbedOptions& options) {
  return options.input == HeadInput::kLogits ? model.num_classes() : model.feature_dim();
}

Var activations(ParameterBinder& binder, Backbone& model, Var x, const EmbedOptions& options,
                NormMode mode) {
  auto out = model.forward(binder, x, mode);
  Var z = options.input == HeadInput::kLogits ? out.logits : out.features;
  return options.relu_before_norm ? nd::relu(z) : z;
}

Var embed(ParameterBinder& binder, Backbone& model, Var x, const EmbedOptions& options,
          NormMode mode) {
  return nd::l2_normalize(activations(binder, model, x, options, mode));
}

Tensor activations(const Backbone& model, const Tensor& x, const EmbedOptions& options) {
  nd::Graph g;
  ParameterBinder binder(g);
  for (const Parameter* p : model.parameters()) binder.freeze(*p);
  // Eval mode leaves running statistics untouched.
  auto& self = const_cast<Backbone&>(model);
  return activations(binder, self, g.constant(x), options, NormMode::kEval).value();
}

Tensor embed(const Backbone& model, const Tensor& x, const EmbedOptions& options) {
  return l2_normalize_rows(activations(model, x, options));
}

Tensor l2_normalize_rows(const Tensor& rows) {
  if (rows.rank() != 2) throw DimensionError("l2_normalize_rows expects a matrix");
  Tensor out = rows;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    const double norm = std::max(std::sqrt(sq), nd::kNormEpsilon);
    for (double& v : row) v /= norm;
  }
  return out;
}

HeadParams head_from_activations(const Tensor& activations, std::span<const std::uint32_t> labels,
                                 std::size_t way) {
  if (activations.rank() != 2 || activations.rows() != labels.size()) {
    throw DimensionError("support activations and labels disagree in length");
  }
  if (way == 0) throw ContractError("head needs at least one class");
  const std::size_t dim = activations.cols();
  Tensor means(nd::Shape{way, dim}, 0.0);
  std::vector<std::size_t> counts(way, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= way) throw ContractError("support label out of range");
    auto src = activations.row(i);
    auto dst = means.row(labels[i]);
    for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
    ++counts[labels[i]];
  }
  for (std::size_t k = 0; k < way; ++k) {
    if (counts[k] == 0) {
      throw ContractError("class " + std::to_string(k) + " has no support sample");
    }
    for (double& v : means.row(k)) v /= static_cast<double>(counts[k]);
  }
  return HeadParams{Parameter{"head.weight", l2_normalize_rows(means), false},
                    Parameter{"head.bias", Tensor(nd::Shape{way}, 0.0), false}};
}

HeadParams support_init(const Backbone& model, const datakit::LabeledBatch& support,
                        std::size_t way, const EmbedOptions& options) {
  if (support.dim != model.input_dim()) {
    throw DimensionError("support features do not match the backbone input");
  }
  return head_from_activations(activations(model, support.features_tensor(), options),
                               support.labels, way);
}

AdaptedModel make_adapted_model(Backbone model, const datakit::LabeledBatch& support,
                                std::size_t way, const EmbedOptions& options) {
  HeadParams head = support_init(model, support, way, options);
  return AdaptedModel{std::move(model), std::move(head), options};
}

Var head_logits(ParameterBinder& binder, AdaptedModel& model, Var x, NormMode mode,
                double temperature) {
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  Var e = embed(binder, model.backbone, x, model.embed, mode);
  Var w = binder.bind(model.head.weight);
  Var b = binder.bind(model.head.bias);
  Var logits = nd::add(nd::matmul(e, nd::transpose(w)), b);
  return temperature == 1.0 ? logits : nd::scale(logits, 1.0 / temperature);
}

Tensor head_forward(const AdaptedModel& model, const Tensor& x, double temperature) {
  nd::Graph g;
  ParameterBinder binder(g);
  auto& self = const_cast<AdaptedModel&>(model);
  for (Parameter* p : self.parameters(true)) binder.freeze(*p);
  return nd::softmax(head_logits(binder, self, g.constant(x), NormMode::kEval, temperature))
      .value();
}

std::vector<std::uint32_t> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("argmax_rows expects a matrix");
  std::vector<std::uint32_t> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[r] = static_cast<std::uint32_t>(best);
  }
  return out;
}

double mean_row_entropy(const Tensor& probabilities) {
  if (probabilities.rank() != 2) throw DimensionError("mean_row_entropy expects a matrix");
  if (probabilities.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < probabilities.rows(); ++r) {
    for (double p : probabilities.row(r)) {
      if (p > 0.0) total -= p * std::log(p);
    }
  }
  return total / static_cast<double>(probabilities.rows());
}

}  // namespace fsl::fewshot
