#include "fsl/backbone/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fsl/error.hpp"
#include "fsl/ndgrad/ops.hpp"
#include "fsl/ndgrad/schedule.hpp"

namespace fsl::backbone {

namespace nd = ndgrad;
using datakit::CounterRng;
using datakit::LabeledBatch;

void PretrainConfig::validate() const {
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label smoothing must lie in [0, 1)");
  }
  if (mixup_enabled && !(mixup_alpha > 0.0)) throw ConfigError("mixup alpha must be positive");
  if (batch_size == 0 || (mixup_enabled && batch_size < 2)) {
    throw ConfigError("batch size must be >= 2 with mixup (>= 1 without)");
  }
  if (cycle_epochs.empty()) throw ConfigError("pre-training needs at least one LR cycle");
  if (!(augment_sigma >= 0.0)) throw ConfigError("augmentation sigma must be non-negative");
  if (!(weight_decay >= 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("invalid momentum or weight decay");
  }
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("hidden widths must be positive");
  }
}

Tensor smooth_labels(std::span<const std::uint32_t> labels, std::size_t num_classes, double eps) {
  if (num_classes < 2) throw DomainError("label smoothing needs K >= 2 classes");
  if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("label smoothing eps must lie in [0, 1)");
  const double off = eps / static_cast<double>(num_classes - 1);
  Tensor t(nd::Shape{labels.size(), num_classes}, off);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw DomainError("label out of range for smoothing");
    t.at(i, labels[i]) = 1.0 - eps;
  }
  return t;
}

MixedBatch mix(const Tensor& x1, const Tensor& y1, const Tensor& x2, const Tensor& y2,
               double lambda) {
  if (x1.shape() != x2.shape() || y1.shape() != y2.shape() || x1.rows() != y1.rows()) {
    throw DimensionError("mixup operands must have matching shapes");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("mixup lambda must lie in [0, 1]");
  MixedBatch out{Tensor(x1.shape()), Tensor(y1.shape()), lambda};
  for (std::size_t i = 0; i < x1.size(); ++i) out.inputs[i] = lambda * x1[i] + (1.0 - lambda) * x2[i];
  for (std::size_t i = 0; i < y1.size(); ++i) out.targets[i] = lambda * y1[i] + (1.0 - lambda) * y2[i];
  return out;
}

MixedBatch mixup(const Tensor& x1, const Tensor& y1, const Tensor& x2, const Tensor& y2,
                 double alpha, CounterRng& rng) {
  if (!(alpha > 0.0)) throw DomainError("mixup alpha must be positive");
  return mix(x1, y1, x2, y2, rng.beta(alpha, alpha));
}

Var cross_entropy_smoothed(Var logits, const Tensor& targets) {
  return nd::soft_cross_entropy(logits, targets);
}

double cross_entropy_smoothed(const Tensor& logits, const Tensor& targets) {
  nd::Graph g;
  return nd::soft_cross_entropy(g.constant(logits), targets).value().item();
}

double accuracy(const Backbone& model, const LabeledBatch& batch) {
  if (batch.empty()) return 0.0;
  const Tensor logits = model.logits(batch.features_tensor());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == batch.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

namespace {

LabeledBatch select_rows(const LabeledBatch& src, std::span<const std::size_t> rows) {
  LabeledBatch out;
  out.dim = src.dim;
  out.features.reserve(rows.size() * src.dim);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(src.row(r), src.labels[r]);
  return out;
}

void shuffle(std::vector<std::size_t>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

PretrainResult pretrain(const datakit::Dataset& data, std::span<const datakit::ClassId> classes,
                        const PretrainConfig& config) {
  config.validate();
  if (classes.size() < 2) throw ContractError("pre-training needs at least two classes");

  std::vector<datakit::ClassId> sorted_classes(classes.begin(), classes.end());
  std::sort(sorted_classes.begin(), sorted_classes.end());
  const LabeledBatch pool = data.gather(sorted_classes);
  const std::size_t num_classes = sorted_classes.size();

  CounterRng init_rng = CounterRng::substream(config.seed, "pretrain/init");
  CounterRng order_rng = CounterRng::substream(config.seed, "pretrain/order");
  CounterRng augment_rng = CounterRng::substream(config.seed, "pretrain/augment");
  CounterRng mixup_rng = CounterRng::substream(config.seed, "pretrain/mixup");

  Backbone model = Backbone::initialize(Architecture{data.dim(), config.hidden, num_classes}, init_rng);
  const Tensor all_targets = smooth_labels(pool.labels, num_classes, config.label_smoothing);
  const double initial_loss =
      cross_entropy_smoothed(model.logits(pool.features_tensor()), all_targets);
  std::vector<double> epoch_losses, epoch_lrs;

  const auto schedule = nd::LrSchedule::cyclic(config.cycle_epochs, config.end_lr);
  auto optimizer = nd::OptimizerState::sgd(
      {.momentum = config.momentum, .weight_decay = config.weight_decay, .nesterov = true});
  std::vector<Parameter*> params = model.parameters();

  const std::size_t n = pool.size();
  const std::size_t batch_size = std::min(config.batch_size, n);
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < schedule.total_epochs(); ++epoch) {
    shuffle(order, order_rng);
    epoch_lrs.push_back(schedule.lr_at(epoch, 0.0));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(n, begin + batch_size);
      // A trailing singleton batch cannot be batch-normalized meaningfully.
      if (end - begin < 2) continue;
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      LabeledBatch batch = augment(select_rows(pool, rows), config.augment_sigma, augment_rng);
      Tensor inputs = batch.features_tensor();
      Tensor targets = smooth_labels(batch.labels, num_classes, config.label_smoothing);
      if (config.mixup_enabled) {
        std::vector<std::size_t> perm(batch.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(perm, mixup_rng);
        Tensor x2(inputs.shape()), y2(targets.shape());
        for (std::size_t i = 0; i < perm.size(); ++i) {
          std::copy_n(inputs.row(perm[i]).begin(), inputs.cols(), x2.row(i).begin());
          std::copy_n(targets.row(perm[i]).begin(), targets.cols(), y2.row(i).begin());
        }
        MixedBatch mixed = mixup(inputs, targets, x2, y2, config.mixup_alpha, mixup_rng);
        inputs = std::move(mixed.inputs);
        targets = std::move(mixed.targets);
      }

      try {
        nd::Graph g;
        ParameterBinder binder(g);
        auto out = model.forward(binder, g.constant(inputs), NormMode::kTrain);
        Var loss = cross_entropy_smoothed(out.logits, targets);
        const double loss_value = loss.value().item();
        const auto grads = binder.gradients(params, g.backward(loss));
        const double fraction = static_cast<double>(b) / static_cast<double>(batches);
        optimizer.step(params, grads, schedule.lr_at(epoch, fraction));
        loss_sum += loss_value;
        ++loss_count;
      } catch (const NumericError& err) {
        throw TrainingError(epoch, "pre-training diverged in epoch " + std::to_string(epoch) +
                                       ": " + err.what());
      }
    }
    const double epoch_loss = loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError(epoch, "pre-training diverged in epoch " + std::to_string(epoch));
    }
    epoch_losses.push_back(epoch_loss);
  }

  const double train_accuracy = accuracy(model, pool);
  return PretrainResult{std::move(model), std::move(sorted_classes), initial_loss,
                        std::move(epoch_losses), std::move(epoch_lrs), train_accuracy};
}

}  // namespace fsl::backbone
