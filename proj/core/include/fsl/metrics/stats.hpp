#pragma once

#include <cstddef>
#include <span>

#include <nlohmann/json.hpp>

namespace fsl::metrics {

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  /// Sample (n - 1) standard deviation; 0 when n == 1.
  double std = 0.0;
  /// 1.96 * std / sqrt(n).
  double ci95 = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  /// Box-plot whisker ends: the most extreme observations within 1.5 IQR of
  /// the quartiles.
  double whisker_low = 0.0;
  double whisker_high = 0.0;
};

/// Throws ContractError on empty input or non-finite values.
SummaryStats summarize(std::span<const double> values);

/// Quantile of sorted data with linear interpolation between order statistics.
double quantile_sorted(std::span<const double> sorted, double q);

void to_json(nlohmann::json& j, const SummaryStats& s);

}  // namespace fsl::metrics
