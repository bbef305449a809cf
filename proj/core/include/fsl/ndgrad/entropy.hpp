#pragma once

#include <span>

namespace fsl::ndgrad {

/// H(p) = -sum p_k ln p_k with 0 ln 0 := 0.
///
/// Entries must be non-negative and sum to 1 within 1e-6 (DomainError
/// otherwise). Probabilities are clamped to [1e-12, 1] inside the log.
double shannon_entropy(std::span<const double> p);

}  // namespace fsl::ndgrad
