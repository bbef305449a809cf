#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fsl/backbone/model.hpp"
#include "fsl/datakit/dataset.hpp"

namespace fsl::fewshot {

using backbone::Backbone;
using backbone::NormMode;
using backbone::ParameterBinder;
using ndgrad::Parameter;
using ndgrad::Tensor;
using ndgrad::Var;

/// Which backbone output feeds the episode classifier.
enum class HeadInput {
  kLogits,    ///< logits over the meta-training classes
  kFeatures,  ///< penultimate activations
};

struct EmbedOptions {
  HeadInput input = HeadInput::kLogits;
  /// Apply ReLU before the L2 normalization.
  bool relu_before_norm = true;
  friend bool operator==(const EmbedOptions&, const EmbedOptions&) = default;
};

/// Episode classifier: logits = weight . embed(x) + bias.
struct HeadParams {
  Parameter weight;  ///< (way, embedding dim)
  Parameter bias;    ///< (way)

  std::size_t way() const { return weight.value.dim(0); }
  std::size_t dim() const { return weight.value.dim(1); }
  friend bool operator==(const HeadParams& a, const HeadParams& b) {
    return a.weight.value == b.weight.value && a.bias.value == b.bias.value;
  }
};

/// Backbone plus appended classifier. All of backbone, weight and bias are
/// trainable unless the adaptation config freezes the backbone.
struct AdaptedModel {
  Backbone backbone;
  HeadParams head;
  EmbedOptions embed;

  std::vector<Parameter*> parameters(bool include_backbone);
  friend bool operator==(const AdaptedModel&, const AdaptedModel&) = default;
};

std::size_t embedding_dim(const Backbone& model, const EmbedOptions& options);

/// Backbone output selected by `options`, with ReLU applied if requested but
/// not normalized. Graph form.
Var activations(ParameterBinder& binder, Backbone& model, Var x, const EmbedOptions& options,
                NormMode mode);
/// ReLU(z) / ||ReLU(z)|| per row (ReLU skipped when relu_before_norm is off).
Var embed(ParameterBinder& binder, Backbone& model, Var x, const EmbedOptions& options,
          NormMode mode);

/// Eval-mode activations and embeddings, gradient-free.
Tensor activations(const Backbone& model, const Tensor& x, const EmbedOptions& options);
Tensor embed(const Backbone& model, const Tensor& x, const EmbedOptions& options);

/// Row-wise v / max(|v|, 1e-12); zero rows stay zero.
Tensor l2_normalize_rows(const Tensor& rows);

/// Support-based initialization from per-sample activations: row y of the
/// weight is the L2-normalized mean activation of class y; the bias is zero.
/// Throws ContractError if some class in [0, way) has no sample.
HeadParams head_from_activations(const Tensor& activations, std::span<const std::uint32_t> labels,
                                 std::size_t way);

HeadParams support_init(const Backbone& model, const datakit::LabeledBatch& support,
                        std::size_t way, const EmbedOptions& options);

AdaptedModel make_adapted_model(Backbone model, const datakit::LabeledBatch& support,
                                std::size_t way, const EmbedOptions& options);

/// Classifier logits divided by the temperature. Graph form.
Var head_logits(ParameterBinder& binder, AdaptedModel& model, Var x, NormMode mode,
                double temperature);

/// softmax((weight . embed(x) + bias) / temperature) in eval mode, one row per input.
Tensor head_forward(const AdaptedModel& model, const Tensor& x, double temperature = 1.0);

/// Row-wise argmax; ties resolve to the lowest class index.
std::vector<std::uint32_t> argmax_rows(const Tensor& scores);

/// Mean Shannon entropy of the rows of a probability matrix.
double mean_row_entropy(const Tensor& probabilities);

}  // namespace fsl::fewshot
