#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsl/backbone/model.hpp"
#include "fsl/datakit/dataset.hpp"
#include "fsl/datakit/rng.hpp"
#include "fsl/ndgrad/graph.hpp"

namespace fsl::backbone {

struct PretrainConfig {
  std::vector<std::size_t> hidden = {64, 64};
  /// Epochs per learning-rate cycle; cycle i starts at 10^-i.
  std::vector<std::size_t> cycle_epochs = {8, 16};
  double end_lr = 1e-6;
  std::size_t batch_size = 64;
  double label_smoothing = 0.1;
  bool mixup_enabled = true;
  double mixup_alpha = 0.25;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Standard deviation of additive Gaussian input noise.
  double augment_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

struct PretrainResult {
  Backbone backbone;
  /// Meta-training class ids; logit k corresponds to classes[k].
  std::vector<datakit::ClassId> classes;
  /// Smoothed cross-entropy of the untrained model on the training pool.
  double initial_loss = 0.0;
  /// Mean minibatch training loss of every epoch.
  std::vector<double> epoch_loss;
  /// Learning rate at the start of every epoch.
  std::vector<double> epoch_lr;
  /// Eval-mode accuracy on the (unaugmented) training pool after training.
  double final_train_accuracy = 0.0;
};

/// Row-wise smoothed targets: 1 - eps at the label, eps / (K - 1) elsewhere.
Tensor smooth_labels(std::span<const std::uint32_t> labels, std::size_t num_classes, double eps);

struct MixedBatch {
  Tensor inputs;
  Tensor targets;
  double lambda = 1.0;
};

/// Convex combination lambda * (x1, y1) + (1 - lambda) * (x2, y2).
MixedBatch mix(const Tensor& x1, const Tensor& y1, const Tensor& x2, const Tensor& y2,
               double lambda);
/// mix() with lambda ~ Beta(alpha, alpha).
MixedBatch mixup(const Tensor& x1, const Tensor& y1, const Tensor& x2, const Tensor& y2,
                 double alpha, datakit::CounterRng& rng);

/// Batch mean of -sum_k t_k log_softmax(z)_k.
Var cross_entropy_smoothed(Var logits, const Tensor& targets);
double cross_entropy_smoothed(const Tensor& logits, const Tensor& targets);

/// Cross-entropy pre-training with label smoothing, optional mixup, coupled
/// weight decay (batch-norm exempt) and SGD with Nesterov momentum under the
/// cyclic cosine schedule. Per minibatch the order is augment -> smooth ->
/// mixup; mixup pairs the batch with a shuffled copy of itself.
PretrainResult pretrain(const datakit::Dataset& data, std::span<const datakit::ClassId> classes,
                        const PretrainConfig& config);

/// Eval-mode top-1 accuracy of the backbone on a labeled batch.
double accuracy(const Backbone& model, const datakit::LabeledBatch& batch);

}  // namespace fsl::backbone
