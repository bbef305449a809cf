#include "fsl/datakit/dataset.hpp"

#include <algorithm>

#include "fsl/error.hpp"

namespace fsl::datakit {

void LabeledBatch::push_back(std::span<const double> x, std::uint32_t label) {
  if (x.size() != dim) {
    throw DimensionError("vector of length " + std::to_string(x.size()) + " in batch of dim " +
                         std::to_string(dim));
  }
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

ndgrad::Tensor LabeledBatch::features_tensor() const {
  return ndgrad::Tensor(ndgrad::Shape{size(), dim}, features);
}

Dataset::Dataset(std::string name, std::size_t dim, std::vector<ClassData> classes)
    : name_(std::move(name)), dim_(dim), classes_(std::move(classes)) {
  if (dim_ == 0) throw ContractError("dataset dimension must be positive");
  std::sort(classes_.begin(), classes_.end(),
            [](const ClassData& a, const ClassData& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const ClassData& c = classes_[i];
    if (i > 0 && classes_[i - 1].id == c.id) {
      throw ContractError("duplicate class id " + std::to_string(c.id));
    }
    if (c.features.empty()) throw ContractError("class " + std::to_string(c.id) + " is empty");
    if (c.features.size() % dim_ != 0) {
      throw DimensionError("class " + std::to_string(c.id) + " holds vectors not of length " +
                           std::to_string(dim_));
    }
  }
}

std::vector<ClassId> Dataset::class_ids() const {
  std::vector<ClassId> ids;
  ids.reserve(classes_.size());
  for (const ClassData& c : classes_) ids.push_back(c.id);
  return ids;
}

bool Dataset::has_class(ClassId id) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), id,
                             [](const ClassData& c, ClassId v) { return c.id < v; });
  return it != classes_.end() && it->id == id;
}

const ClassData& Dataset::class_data(ClassId id) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), id,
                             [](const ClassData& c, ClassId v) { return c.id < v; });
  if (it == classes_.end() || it->id != id) {
    throw ContractError("dataset '" + name_ + "' has no class " + std::to_string(id));
  }
  return *it;
}

std::span<const double> Dataset::sample(ClassId id, std::size_t index) const {
  const ClassData& c = class_data(id);
  if (index >= c.count(dim_)) {
    throw RangeError("sample " + std::to_string(index) + " out of range for class " +
                     std::to_string(id));
  }
  return std::span<const double>(c.features).subspan(index * dim_, dim_);
}

LabeledBatch Dataset::gather(std::span<const ClassId> ids) const {
  std::vector<ClassId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ContractError("gather: duplicate class ids");
  }
  LabeledBatch batch;
  batch.dim = dim_;
  for (std::size_t label = 0; label < sorted.size(); ++label) {
    const ClassData& c = class_data(sorted[label]);
    for (std::size_t i = 0; i < c.count(dim_); ++i) {
      batch.push_back(std::span<const double>(c.features).subspan(i * dim_, dim_),
                      static_cast<std::uint32_t>(label));
    }
  }
  return batch;
}

void SyntheticSpec::validate() const {
  if (n_classes == 0 || dim == 0 || samples_per_class == 0) {
    throw ConfigError("synthetic spec counts must be positive");
  }
  if (!(noise_sigma > 0.0)) throw ConfigError("synthetic noise_sigma must be positive");
  if (!(center_scale >= 0.0)) throw ConfigError("synthetic center_scale must be non-negative");
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed);
  std::vector<std::vector<double>> centers(spec.n_classes, std::vector<double>(spec.dim));
  for (auto& center : centers)
    for (double& v : center) v = rng.normal(0.0, spec.center_scale);

  std::vector<ClassData> classes(spec.n_classes);
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    classes[k].id = static_cast<ClassId>(k);
    classes[k].features.reserve(spec.samples_per_class * spec.dim);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i)
      for (std::size_t d = 0; d < spec.dim; ++d)
        classes[k].features.push_back(centers[k][d] + rng.normal(0.0, spec.noise_sigma));
  }
  return Dataset(spec.name, spec.dim, std::move(classes));
}

LabeledBatch augment(const LabeledBatch& batch, double noise_sigma, CounterRng& rng) {
  if (!(noise_sigma >= 0.0)) throw DomainError("augmentation sigma must be non-negative");
  LabeledBatch out = batch;
  if (noise_sigma == 0.0) return out;
  for (double& v : out.features) v += rng.normal(0.0, noise_sigma);
  return out;
}

}  // namespace fsl::datakit
