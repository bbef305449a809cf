#pragma once

#include <span>
#include <vector>

#include "fsl/ndgrad/graph.hpp"

namespace fsl::ndgrad {

/// Floor applied to arguments of log and to denominators.
inline constexpr double kClampFloor = 1e-12;
/// Floor on the row norm in l2_normalize: v / max(|v|, kNormEpsilon).
inline constexpr double kNormEpsilon = 1e-12;

// Elementwise binary ops broadcast with numpy rules.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a / max(b, kClampFloor); intended for positive denominators.
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double factor);
Var relu(Var a);
Var exp(Var a);
/// log(max(a, kClampFloor)).
Var log(Var a);

/// (m, k) x (k, n) -> (m, n).
Var matmul(Var a, Var b);
Var transpose(Var a);
Var broadcast_to(Var a, const Shape& shape);

Var sum(Var a);
Var mean(Var a);
/// Sum over the last dimension: (r, c) -> (r).
Var sum_rows(Var a);

// Row-wise over the last dimension.
Var softmax(Var a);
Var log_softmax(Var a);
Var l2_normalize(Var a);

struct BatchNormStats {
  std::vector<double> mean;
  /// Biased (population) variance of the batch.
  std::vector<double> variance;
};

/// Per-feature normalization of an (n, f) batch using its own statistics.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchNormStats* stats = nullptr);
/// Normalization with fixed statistics.
Var batch_norm_eval(Var x, Var gamma, Var beta, std::span<const double> running_mean,
                    std::span<const double> running_var, double eps);

/// Shannon entropy of each row of softmax(logits), natural log.
Var softmax_entropy_rows(Var logits);

/// Mean over rows of -sum_k t_k log_softmax(z)_k.
Var soft_cross_entropy(Var logits, const Tensor& targets);

/// Output shape of broadcasting `a` against `b`.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace fsl::ndgrad
