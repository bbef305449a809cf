#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

namespace fsl::metrics {

struct HardnessPoint {
  double omega = 0.0;
  /// Accuracy in percent.
  double accuracy = 0.0;
};

struct RegressionFit {
  double intercept = 0.0;
  double slope = 0.0;
  /// Area under the fitted line clipped to [0, 100], from omega = 0 to the
  /// positive x-intercept. Undefined when the slope is not negative.
  std::optional<double> area;
  std::size_t n = 0;
  double residual_rms = 0.0;
  /// Non-empty when the area is undefined.
  std::string warning;
};

/// Ordinary least squares accuracy = a + b * omega. Throws ContractError for
/// fewer than two points and DegenerateFitError when all omegas coincide.
RegressionFit fit_hardness_curve(std::span<const HardnessPoint> points);

/// Integral over [0, x0] of clip(a + b x, 0, 100), x0 = -a / b. Requires b < 0.
double first_quadrant_area(double intercept, double slope);

/// Pearson correlation of omega and accuracy. Needs >= 3 points and nonzero
/// variance in both coordinates (ContractError otherwise).
double correlate(std::span<const HardnessPoint> points);

void to_json(nlohmann::json& j, const RegressionFit& fit);

}  // namespace fsl::metrics
