#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fsl/datakit/dataset.hpp"
#include "fsl/datakit/episode.hpp"

namespace fsl::datakit {

inline constexpr std::uint16_t kEpisodeFormatVersion = 1;
inline constexpr std::uint16_t kDatasetFormatVersion = 1;

/// Episode file ("FSEP"), all integers and floats little-endian:
///
///   "FSEP" | u16 version | u32 episode count
///   per episode:
///     u32 way | u32 support_shot | u32 query_shot | u64 seed | u32 dim
///     u32 class id x way
///     (f64 x dim, u32 label) x way*support_shot
///     (f64 x dim, u32 label) x way*query_shot
///   u32 CRC32 of every preceding byte
void save_episodes(const std::filesystem::path& path, std::span<const Episode> episodes);
std::vector<Episode> load_episodes(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_episodes(std::span<const Episode> episodes);
std::vector<Episode> decode_episodes(std::span<const std::uint8_t> bytes);

/// Dataset file ("FSDS"):
///
///   "FSDS" | u16 version | string name (u32 length + bytes) | u32 dim
///   u32 class count
///   per class: u32 class id | u32 sample count | f64 x dim x count
///   u32 CRC32 of every preceding byte
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// One row per sample: class id, then the features. Blank lines and lines
/// starting with '#' are skipped; a first row whose leading field is not an
/// integer is treated as a header.
Dataset load_csv_dataset(const std::filesystem::path& path);

}  // namespace fsl::datakit
