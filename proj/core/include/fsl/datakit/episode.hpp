#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsl/datakit/dataset.hpp"
#include "fsl/datakit/rng.hpp"

namespace fsl::datakit {

/// Pairwise-disjoint class pools.
struct ClassSplit {
  std::vector<ClassId> train;
  std::vector<ClassId> val;
  std::vector<ClassId> test;

  /// train and val merged, ascending.
  std::vector<ClassId> train_val() const;
  friend bool operator==(const ClassSplit&, const ClassSplit&) = default;
};

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

/// Deterministic shuffled partition of the dataset's classes. Part sizes are
/// round(fraction * n) for train and val, the remainder for test. Every part
/// with a non-zero fraction must receive at least one class.
ClassSplit split_classes(const Dataset& dataset, const SplitFractions& fractions,
                         std::uint64_t seed);

/// An N-way (support_shot)-shot episode with query_shot queries per class.
struct Protocol {
  std::uint32_t way = 5;
  std::uint32_t support_shot = 1;
  std::uint32_t query_shot = 15;

  std::string tag() const;
  friend bool operator==(const Protocol&, const Protocol&) = default;
};

/// One few-shot task. Labels are local: label k denotes class_ids[k], and
/// class_ids is ascending.
struct Episode {
  std::uint32_t way = 0;
  std::uint32_t support_shot = 0;
  std::uint32_t query_shot = 0;
  std::uint64_t seed = 0;
  std::vector<ClassId> class_ids;
  LabeledBatch support;
  LabeledBatch query;

  std::size_t dim() const noexcept { return support.dim; }
  Protocol protocol() const { return {way, support_shot, query_shot}; }
  /// Throws ContractError if cardinalities or labels are inconsistent.
  void validate() const;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Draw order: `way` classes uniformly without replacement from `pool`
/// (partial Fisher-Yates over the ascending pool), sorted ascending; then, per
/// class in ascending id order, support_shot + query_shot distinct sample
/// indices (partial Fisher-Yates), the first support_shot going to the support
/// set. Episode::seed records rng.seed().
Episode sample_episode(const Dataset& dataset, std::span<const ClassId> pool,
                       const Protocol& protocol, CounterRng& rng);

}  // namespace fsl::datakit
