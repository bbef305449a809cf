#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "config.hpp"

namespace fslrun {

inline constexpr int kManifestVersion = 1;

/// Provenance record of one command. Written with status "running" when the
/// command starts and rewritten with checksums and timings when it ends.
class Manifest {
 public:
  Manifest(std::filesystem::path path, std::string_view command, const RunConfig& config);

  void seed(std::string_view label, std::uint64_t value);
  void input(const std::filesystem::path& file);
  void output(const std::filesystem::path& file);
  void timing(std::string_view label, double seconds);
  nlohmann::ordered_json& details() { return doc_["details"]; }

  void begin();
  void finish();
  void fail(std::string_view message);

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void write() const;

  std::filesystem::path path_;
  nlohmann::ordered_json doc_;
  std::chrono::steady_clock::time_point start_;
};

/// Seconds since `start` on the steady clock.
double seconds_since(std::chrono::steady_clock::time_point start);

}  // namespace fslrun
