#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fsl/backbone/model.hpp"
#include "fsl/datakit/dataset.hpp"

namespace fsl::backbone {

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  Backbone backbone;
  /// Meta-training class ids in logit order.
  std::vector<datakit::ClassId> classes;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Checkpoint file ("FSBB"), little-endian:
///
///   "FSBB" | u16 version | u32 input_dim | u32 depth | u32 width x depth
///   u32 num_classes | u32 class id x num_classes
///   per hidden block: f64 weight (in x out, row-major) | f64 bias
///                     f64 bn scale | f64 bn shift | f64 running mean | f64 running var
///   f64 output weight (width x num_classes) | f64 output bias
///   u32 CRC32 of every preceding byte
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fsl::backbone
