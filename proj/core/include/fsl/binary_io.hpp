#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsl {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32_of_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Little-endian encoder for the binary container formats.
class ByteWriter {
 public:
  void magic(std::string_view four_cc);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  void string(std::string_view s);

  /// Appends CRC32 of everything written so far.
  void seal();
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Decoder over a sealed container. Construction verifies magic, version and
/// the trailing CRC; reads past the payload raise TruncatedFileError.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string_view four_cc,
             std::uint16_t expected_version, std::string what);

  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void f64s(std::span<double> out);
  std::string string();

  bool at_end() const noexcept { return pos_ == end_; }
  std::size_t remaining() const noexcept { return end_ - pos_; }
  /// Throws IoError unless the whole payload was consumed.
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
  std::string what_;
};

}  // namespace fsl
