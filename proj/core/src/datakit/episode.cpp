#include "fsl/datakit/episode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsl/error.hpp"

namespace fsl::datakit {
namespace {

/// Moves `count` uniformly chosen elements to the front of `items`.
template <class T>
void partial_shuffle(std::vector<T>& items, std::size_t count, CounterRng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
}

}  // namespace

std::vector<ClassId> ClassSplit::train_val() const {
  std::vector<ClassId> ids = train;
  ids.insert(ids.end(), val.begin(), val.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClassSplit split_classes(const Dataset& dataset, const SplitFractions& fractions,
                         std::uint64_t seed) {
  const double parts[3] = {fractions.train, fractions.val, fractions.test};
  for (double f : parts) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const std::size_t n = dataset.num_classes();
  const auto n_train = static_cast<std::size_t>(std::llround(parts[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(parts[1] * static_cast<double>(n)));
  if (n_train + n_val > n) throw ConfigError("split fractions exceed the number of classes");
  const std::size_t n_test = n - n_train - n_val;
  const std::size_t sizes[3] = {n_train, n_val, n_test};
  for (int i = 0; i < 3; ++i) {
    if (parts[i] > 0.0 && sizes[i] == 0) {
      throw ConfigError("too few classes (" + std::to_string(n) +
                        ") for a non-empty part of every split");
    }
  }

  std::vector<ClassId> ids = dataset.class_ids();
  CounterRng rng(seed);
  partial_shuffle(ids, ids.size(), rng);

  ClassSplit split;
  split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                   ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::string Protocol::tag() const {
  return std::to_string(way) + "w" + std::to_string(support_shot) + "s" +
         std::to_string(query_shot) + "q";
}

void Episode::validate() const {
  if (way == 0 || support_shot == 0) throw ContractError("episode needs way >= 1 and shot >= 1");
  if (class_ids.size() != way) throw ContractError("episode class table does not match way");
  if (!std::is_sorted(class_ids.begin(), class_ids.end()) ||
      std::adjacent_find(class_ids.begin(), class_ids.end()) != class_ids.end()) {
    throw ContractError("episode class ids must be strictly ascending");
  }
  if (support.size() != static_cast<std::size_t>(way) * support_shot ||
      query.size() != static_cast<std::size_t>(way) * query_shot) {
    throw ContractError("episode set sizes do not match way x shot");
  }
  if (support.dim != query.dim || support.features.size() != support.size() * support.dim ||
      query.features.size() != query.size() * query.dim) {
    throw ContractError("episode feature storage is inconsistent");
  }
  std::vector<std::size_t> s_hist(way, 0), q_hist(way, 0);
  for (auto y : support.labels) {
    if (y >= way) throw ContractError("support label out of range");
    ++s_hist[y];
  }
  for (auto y : query.labels) {
    if (y >= way) throw ContractError("query label out of range");
    ++q_hist[y];
  }
  for (std::size_t k = 0; k < way; ++k) {
    if (s_hist[k] != support_shot || q_hist[k] != query_shot) {
      throw ContractError("episode label histogram is unbalanced");
    }
  }
}

Episode sample_episode(const Dataset& dataset, std::span<const ClassId> pool,
                       const Protocol& protocol, CounterRng& rng) {
  if (protocol.way == 0 || protocol.support_shot == 0) {
    throw ContractError("episodes need way >= 1 and support_shot >= 1");
  }
  std::vector<ClassId> classes(pool.begin(), pool.end());
  std::sort(classes.begin(), classes.end());
  if (std::adjacent_find(classes.begin(), classes.end()) != classes.end()) {
    throw ContractError("class pool contains duplicates");
  }
  if (protocol.way > classes.size()) {
    throw SamplingError("way " + std::to_string(protocol.way) + " exceeds the " +
                        std::to_string(classes.size()) + " classes in the pool");
  }

  Episode ep;
  ep.way = protocol.way;
  ep.support_shot = protocol.support_shot;
  ep.query_shot = protocol.query_shot;
  ep.seed = rng.seed();
  partial_shuffle(classes, protocol.way, rng);
  ep.class_ids.assign(classes.begin(), classes.begin() + protocol.way);
  std::sort(ep.class_ids.begin(), ep.class_ids.end());

  const std::size_t per_class = std::size_t{protocol.support_shot} + protocol.query_shot;
  ep.support.dim = dataset.dim();
  ep.query.dim = dataset.dim();
  for (std::uint32_t label = 0; label < ep.way; ++label) {
    const ClassId id = ep.class_ids[label];
    const std::size_t available = dataset.samples_in(id);
    if (available < per_class) {
      throw SamplingError("class " + std::to_string(id) + " has " + std::to_string(available) +
                          " samples but the protocol needs " + std::to_string(per_class));
    }
    std::vector<std::size_t> idx(available);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    partial_shuffle(idx, per_class, rng);
    for (std::size_t i = 0; i < per_class; ++i) {
      auto& target = i < protocol.support_shot ? ep.support : ep.query;
      target.push_back(dataset.sample(id, idx[i]), label);
    }
  }
  return ep;
}

}  // namespace fsl::datakit
