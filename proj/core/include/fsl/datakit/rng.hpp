#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace fsl::datakit {

/// Philox4x32-10 counter-based generator.
///
/// The 64-bit seed is the Philox key; each 128-bit block is produced from a
/// block counter, so the sequence is identical on every platform. Draw order:
/// next_u64() consumes one half of a block; uniform() one next_u64();
/// normal() two uniform() draws (Box-Muller, cosine branch); gamma() uses
/// Marsaglia-Tsang rejection on top of normal() and uniform().
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}

  /// Independent stream derived from a master seed, a label and an index.
  static CounterRng substream(std::uint64_t master_seed, std::string_view label,
                              std::uint64_t index = 0);
  static std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view label,
                                   std::uint64_t index = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);
  double beta(double a, double b);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

}  // namespace fsl::datakit
