#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fsl/backbone/pretrain.hpp"
#include "fsl/datakit/dataset.hpp"
#include "fsl/datakit/episode.hpp"
#include "fsl/fewshot/adapt.hpp"
#include "fsl/fewshot/evaluate.hpp"

namespace fslrun {

namespace dk = fsl::datakit;
namespace fs = fsl::fewshot;

enum class DataSource { kSynthetic, kFsds, kCsv };

/// Which classes the backbone is pre-trained on.
enum class ClassPool { kTrain, kTrainVal };

enum class SweepAxis { kQueryShot, kWay, kSupportShot };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  /// Input file for the fsds and csv sources.
  std::string path;
  /// Used by the synthetic source; its seed is derived from the master seed.
  dk::SyntheticSpec synthetic;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Every protocol shares query_shot and n_episodes; there is no per-protocol
/// override of anything. Stored protocols leave query_shot at 0.
struct EvalConfig {
  std::vector<dk::Protocol> protocols = {{5, 1, 0}, {5, 5, 0}};
  std::uint32_t query_shot = 15;
  std::size_t n_episodes = 200;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct SweepConfig {
  SweepAxis axis = SweepAxis::kQueryShot;
  std::vector<std::uint32_t> values = {1, 5, 15, 30};
  /// The protocol the swept axis is varied around.
  dk::Protocol base = {5, 1, 15};
  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "fsl_out";
  std::size_t workers = 1;
  std::vector<fs::Method> methods = {fs::Method::kInitOnly, fs::Method::kFinetune,
                                     fs::Method::kTransductive};
  DataConfig data;
  /// Leaves 5 test classes out of the default 20, enough for 5-way episodes.
  dk::SplitFractions split = {0.5, 0.25, 0.25};
  fsl::backbone::PretrainConfig pretrain;
  ClassPool pool = ClassPool::kTrain;
  fs::AdaptConfig adapt;
  EvalConfig eval;
  /// Backbone checkpoint used as the hardness extractor; empty means the
  /// run's own backbone.
  std::string hardness_reference;
  SweepConfig sweep;

  /// Throws fsl::ConfigError naming the offending key.
  void validate() const;
  /// Protocols with the shared query_shot filled in.
  std::vector<dk::Protocol> grid() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// INI text: [section] headers, key = value lines, ';' or '#' comments.
/// Missing keys keep their defaults; unknown sections or keys are errors.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Every key of every section, doubles in shortest round-trip form, so
/// parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

std::string_view to_string(DataSource source);
std::string_view to_string(ClassPool pool);
std::string_view to_string(SweepAxis axis);

/// "5:1,5:5" style list of way:support_shot pairs; query_shot is left at 0.
std::vector<dk::Protocol> parse_protocols(std::string_view text);
std::vector<fs::Method> parse_methods(std::string_view text);

}  // namespace fslrun
