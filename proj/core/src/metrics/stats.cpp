#include "fsl/metrics/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fsl/error.hpp"

namespace fsl::metrics {

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw ContractError("summarize needs at least one value");
  std::vector<double> v(values.begin(), values.end());
  for (double x : v) {
    if (!std::isfinite(x)) throw ContractError("summarize received a non-finite value");
  }
  std::sort(v.begin(), v.end());

  SummaryStats s;
  s.n = v.size();
  const double n = static_cast<double>(s.n);
  // Summing sorted values keeps the result independent of input order.
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  s.ci95 = 1.96 * s.std / std::sqrt(n);
  s.median = quantile_sorted(v, 0.5);
  s.q25 = quantile_sorted(v, 0.25);
  s.q75 = quantile_sorted(v, 0.75);
  const double iqr = s.q75 - s.q25;
  const double low_fence = s.q25 - 1.5 * iqr;
  const double high_fence = s.q75 + 1.5 * iqr;
  s.whisker_low = *std::lower_bound(v.begin(), v.end(), low_fence);
  s.whisker_high = *(std::upper_bound(v.begin(), v.end(), high_fence) - 1);
  return s;
}

void to_json(nlohmann::json& j, const SummaryStats& s) {
  j = nlohmann::json{{"n", s.n},           {"mean", s.mean},
                     {"std", s.std},       {"ci95", s.ci95},
                     {"median", s.median}, {"q25", s.q25},
                     {"q75", s.q75},       {"whisker_low", s.whisker_low},
                     {"whisker_high", s.whisker_high}};
}

}  // namespace fsl::metrics
