#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "fsl/backbone/model.hpp"
#include "fsl/fewshot/evaluate.hpp"

namespace fslrun {

/// Environment variable giving the root for relative output directories.
inline constexpr const char* kOutRootEnv = "FSL_OUT_ROOT";

/// Exit codes of the fsl binary.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

/// File layout of one run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset.fsds"; }
  std::filesystem::path split() const { return root / "split.json"; }
  std::filesystem::path backbone() const { return root / "backbone.fsbb"; }
  std::filesystem::path loss_trace() const { return root / "loss_trace.csv"; }
  std::filesystem::path episodes(const dk::Protocol& p) const {
    return root / ("episodes_" + p.tag() + ".fsep");
  }
  std::filesystem::path results() const { return root / "results.csv"; }
  std::filesystem::path summary() const { return root / "summary.json"; }
  std::filesystem::path hardness_csv() const { return root / "hardness.csv"; }
  std::filesystem::path hardness_json() const { return root / "hardness.json"; }
  std::filesystem::path sweep() const { return root / "sweep.csv"; }
  std::filesystem::path manifest(const std::string& command) const {
    return root / ("manifest_" + command + ".json");
  }
};

/// out_dir, placed under $FSL_OUT_ROOT when it is relative and the variable is set.
RunPaths run_paths(const RunConfig& config);

void cmd_gen_data(const RunConfig& config);
void cmd_pretrain(const RunConfig& config);
void cmd_episodes(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_hardness(const RunConfig& config);
void cmd_sweep(const RunConfig& config);

/// Evaluates every (episode, method) pair on `workers` threads. Result
/// [e * methods.size() + m] belongs to episodes[e] and methods[m], whatever
/// the completion order.
std::vector<fs::EpisodeResult> evaluate_all(const fsl::backbone::Backbone& model,
                                            std::span<const dk::Episode> episodes,
                                            std::span<const fs::Method> methods,
                                            const fs::AdaptConfig& adapt, std::size_t workers);

/// Exit code for the exception currently being handled.
int exit_code_for_current_exception();

/// Full command-line entry point of the fsl binary.
int run_cli(int argc, const char* const* argv);

}  // namespace fslrun
