#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsl/datakit/rng.hpp"
#include "fsl/ndgrad/tensor.hpp"

namespace fsl::datakit {

using ClassId = std::uint32_t;

/// Row-major feature vectors with one label each.
struct LabeledBatch {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
  void push_back(std::span<const double> x, std::uint32_t label);
  /// Features as an (n, dim) tensor.
  ndgrad::Tensor features_tensor() const;

  friend bool operator==(const LabeledBatch&, const LabeledBatch&) = default;
};

struct ClassData {
  ClassId id = 0;
  /// count() rows of length dim, row-major.
  std::vector<double> features;

  std::size_t count(std::size_t dim) const { return dim == 0 ? 0 : features.size() / dim; }
  friend bool operator==(const ClassData&, const ClassData&) = default;
};

/// Immutable labeled pool of vectors grouped by class.
class Dataset {
 public:
  Dataset(std::string name, std::size_t dim, std::vector<ClassData> classes);

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<ClassData>& classes() const noexcept { return classes_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::vector<ClassId> class_ids() const;
  bool has_class(ClassId id) const;
  const ClassData& class_data(ClassId id) const;
  std::size_t samples_in(ClassId id) const { return class_data(id).count(dim_); }
  std::span<const double> sample(ClassId id, std::size_t index) const;

  /// All samples of the given classes, labeled by the position of their class
  /// in ascending class-id order.
  LabeledBatch gather(std::span<const ClassId> ids) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::string name_;
  std::size_t dim_;
  std::vector<ClassData> classes_;
};

struct SyntheticSpec {
  std::size_t n_classes = 20;
  std::size_t dim = 16;
  std::size_t samples_per_class = 50;
  double center_scale = 1.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
  std::string name = "synthetic";

  void validate() const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Isotropic Gaussian clusters. Centers are drawn first (class order,
/// coordinates N(0, center_scale^2)); then, class by class, samples are
/// center + N(0, noise_sigma^2) noise. Class ids are 0..n_classes-1.
Dataset make_synthetic(const SyntheticSpec& spec);

/// Adds i.i.d. N(0, sigma^2) noise to every feature; labels are untouched.
LabeledBatch augment(const LabeledBatch& batch, double noise_sigma, CounterRng& rng);

}  // namespace fsl::datakit
