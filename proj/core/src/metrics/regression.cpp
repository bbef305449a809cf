#include "fsl/metrics/regression.hpp"

#include <cmath>

#include "fsl/error.hpp"

namespace fsl::metrics {

namespace {

struct Moments {
  double mean_x = 0.0, mean_y = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
};

Moments moments(std::span<const HardnessPoint> points) {
  Moments m;
  const double n = static_cast<double>(points.size());
  for (const auto& p : points) {
    if (!std::isfinite(p.omega) || !std::isfinite(p.accuracy)) {
      throw ContractError("non-finite point in hardness data");
    }
    m.mean_x += p.omega;
    m.mean_y += p.accuracy;
  }
  m.mean_x /= n;
  m.mean_y /= n;
  for (const auto& p : points) {
    const double dx = p.omega - m.mean_x;
    const double dy = p.accuracy - m.mean_y;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

}  // namespace

double first_quadrant_area(double intercept, double slope) {
  if (!(slope < 0.0)) throw DomainError("first-quadrant area needs a negative slope");
  if (intercept <= 0.0) return 0.0;
  const double run = -slope;
  if (intercept <= 100.0) return intercept * intercept / (2.0 * run);
  // Flat at 100 until the line drops below the cap, then a triangle.
  const double flat = (intercept - 100.0) / run;
  return 100.0 * flat + 100.0 * 100.0 / (2.0 * run);
}

RegressionFit fit_hardness_curve(std::span<const HardnessPoint> points) {
  if (points.size() < 2) throw ContractError("a regression fit needs at least two points");
  const Moments m = moments(points);
  if (m.sxx == 0.0) throw DegenerateFitError("all hardness values are equal; slope is undefined");

  RegressionFit fit;
  fit.n = points.size();
  fit.slope = m.sxy / m.sxx;
  fit.intercept = m.mean_y - fit.slope * m.mean_x;
  double ss = 0.0;
  for (const auto& p : points) {
    const double r = p.accuracy - (fit.intercept + fit.slope * p.omega);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(points.size()));
  if (fit.slope < 0.0) {
    fit.area = first_quadrant_area(fit.intercept, fit.slope);
  } else {
    fit.warning = "non-negative slope; first-quadrant area is undefined";
  }
  return fit;
}

double correlate(std::span<const HardnessPoint> points) {
  if (points.size() < 3) throw ContractError("correlation needs at least three points");
  const Moments m = moments(points);
  if (m.sxx == 0.0 || m.syy == 0.0) throw ContractError("correlation of a constant coordinate");
  return m.sxy / std::sqrt(m.sxx * m.syy);
}

void to_json(nlohmann::json& j, const RegressionFit& fit) {
  j = nlohmann::json{{"intercept", fit.intercept},
                     {"slope", fit.slope},
                     {"area", fit.area ? nlohmann::json(*fit.area) : nlohmann::json(nullptr)},
                     {"n", fit.n},
                     {"residual_rms", fit.residual_rms}};
  if (!fit.warning.empty()) j["warning"] = fit.warning;
}

}  // namespace fsl::metrics
