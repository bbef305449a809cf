#include "fsl/ndgrad/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "fsl/error.hpp"
#include "fsl/ndgrad/ops.hpp"

namespace fsl::ndgrad {

double shannon_entropy(std::span<const double> p) {
  if (p.empty()) throw DomainError("entropy of an empty distribution");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || v > 1.0) throw DomainError("probability outside [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("probabilities do not sum to 1");
  double h = 0.0;
  for (double v : p) {
    if (v == 0.0) continue;
    h -= v * std::log(std::clamp(v, kClampFloor, 1.0));
  }
  return h;
}

}  // namespace fsl::ndgrad
