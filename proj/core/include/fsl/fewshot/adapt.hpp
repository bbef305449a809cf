#pragma once

#include <cstddef>
#include <vector>

#include "fsl/datakit/dataset.hpp"
#include "fsl/fewshot/head.hpp"
#include "fsl/ndgrad/optim.hpp"

namespace fsl::fewshot {

/// Order of the two updates inside one transductive epoch.
enum class UpdateOrder { kSupportThenQuery, kQueryThenSupport };

struct AdaptConfig {
  std::size_t epochs = 25;
  double lr = 5e-5;
  ndgrad::AdamOptions adam;
  /// Weight of the query-entropy term.
  double entropy_coefficient = 1.0;
  /// Logits are divided by this before every softmax.
  double temperature = 1.0;
  /// Divide the entropy term by ln(way) so it lies in [0, 1].
  bool entropy_scale_by_log_way = false;
  /// Train only the appended head.
  bool freeze_backbone = false;
  UpdateOrder order = UpdateOrder::kSupportThenQuery;
  EmbedOptions embed;

  void validate() const;
  friend bool operator==(const AdaptConfig&, const AdaptConfig&) = default;
};

/// Per-epoch diagnostics, each measured before that epoch's update.
struct AdaptTrace {
  std::vector<double> support_loss;
  /// Mean query entropy (unweighted); empty for plain fine-tuning.
  std::vector<double> query_entropy;
  friend bool operator==(const AdaptTrace&, const AdaptTrace&) = default;
};

struct AdaptResult {
  AdaptedModel model;
  AdaptTrace trace;
};

/// Full-batch Adam on the support cross-entropy, one step per epoch.
/// Batch-norm layers use batch statistics and leave running statistics alone.
/// Throws AdaptationError on a non-finite loss or gradient.
AdaptResult finetune(AdaptedModel model, const datakit::LabeledBatch& support,
                     const AdaptConfig& config);

/// Per epoch: one Adam step on the support cross-entropy and one on the
/// weighted mean query entropy, sharing one optimizer state. Query labels are
/// never read. A zero entropy coefficient skips the query step, reducing to
/// finetune().
AdaptResult transductive_finetune(AdaptedModel model, const datakit::LabeledBatch& support,
                                  const Tensor& query_inputs, const AdaptConfig& config);

}  // namespace fsl::fewshot
