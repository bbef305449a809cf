#include "fsl/ndgrad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "fsl/error.hpp"

namespace fsl::ndgrad {
namespace {

void require_same_graph(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw ContractError(std::string(op) + ": operands belong to different graphs");
  }
}

/// For every element of `out`, the flat index of the element of `in` it reads.
std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> in_strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    in_strides[d + offset] = in[d] == 1 ? 0 : stride;
    stride *= in[d];
  }
  const std::size_t total = shape_size(out);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < total; ++i) {
    map[i] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += in_strides[d];
      if (counter[d] < out[d]) break;
      src -= in_strides[d] * counter[d];
      counter[d] = 0;
    }
  }
  return map;
}

template <class Forward, class GradA, class GradB>
Var binary_op(const char* name, Var a, Var b, Forward forward, GradA grad_a, GradB grad_b) {
  require_same_graph(a, b, name);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape out_shape = broadcast_shape(av.shape(), bv.shape());
  auto map_a = broadcast_map(av.shape(), out_shape);
  auto map_b = broadcast_map(bv.shape(), out_shape);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(av[map_a[i]], bv[map_b[i]]);

  auto backward = [av, bv, map_a = std::move(map_a), map_b = std::move(map_b), grad_a, grad_b](
                      const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = av[map_a[i]];
      const double y = bv[map_b[i]];
      if (grads[0] != nullptr) (*grads[0])[map_a[i]] += g[i] * grad_a(x, y);
      if (grads[1] != nullptr) (*grads[1])[map_b[i]] += g[i] * grad_b(x, y);
    }
  };
  return a.graph().record(name, std::move(out), {a, b}, std::move(backward));
}

template <class Forward, class Derivative>
Var unary_op(const char* name, Var a, Forward forward, Derivative derivative) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(av[i]);
  auto backward = [av, derivative](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * derivative(av[i]);
  };
  return a.graph().record(name, std::move(out), {a}, std::move(backward));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " +
                         shape_to_string(t.shape()));
  }
}

void require_rows_nonempty(const Tensor& t, const char* op) {
  if (t.rank() == 0 || t.cols() == 0) {
    throw DimensionError(std::string(op) + " expects a non-empty last dimension, got shape " +
                         shape_to_string(t.shape()));
  }
}

Tensor row_softmax(const Tensor& z) {
  Tensor p(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto out = p.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      out[k] = std::exp(in[k] - m);
      total += out[k];
    }
    for (double& v : out) v /= total;
  }
  return p;
}

Tensor row_log_softmax(const Tensor& z) {
  Tensor l(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto out = l.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - m);
    const double lse = m + std::log(total);
    for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] - lse;
  }
  return l;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_to_string(a) + " with " +
                           shape_to_string(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

Var add(Var a, Var b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / std::max(y, kClampFloor); },
      [](double, double y) { return 1.0 / std::max(y, kClampFloor); },
      [](double x, double y) { return y < kClampFloor ? 0.0 : -x / (y * y); });
}

Var neg(Var a) {
  return unary_op("neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Var scale(Var a, double factor) {
  return unary_op(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Var relu(Var a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary_op("exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  return unary_op(
      "log", a, [](double x) { return std::log(std::max(x, kClampFloor)); },
      [](double x) { return x < kClampFloor ? 0.0 : 1.0 / x; });
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw DimensionError("matmul: " + shape_to_string(av.shape()) + " x " +
                         shape_to_string(bv.shape()));
  }
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  auto backward = [av, bv, m, k, n](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] != nullptr) {
      Tensor& ga = *grads[0];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (grads[1] != nullptr) {
      Tensor& gb = *grads[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  };
  return a.graph().record("matmul", std::move(out), {a, b}, std::move(backward));
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  auto backward = [r, c](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*grads[0])[i * c + j] += g[j * r + i];
  };
  return a.graph().record("transpose", std::move(out), {a}, std::move(backward));
}

Var broadcast_to(Var a, const Shape& shape) {
  const Tensor& av = a.value();
  if (broadcast_shape(av.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + shape_to_string(av.shape()) + " to " +
                         shape_to_string(shape));
  }
  auto map = broadcast_map(av.shape(), shape);
  Tensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[map[i]];
  auto backward = [map = std::move(map)](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[map[i]] += g[i];
  };
  return a.graph().record("broadcast", std::move(out), {a}, std::move(backward));
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  auto backward = [](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (double& v : grads[0]->data()) v += g[0];
  };
  return a.graph().record("sum", Tensor::scalar(total), {a}, std::move(backward));
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_rows(Var a) {
  const Tensor& av = a.value();
  require_rows_nonempty(av, "sum_rows");
  Shape out_shape(av.shape().begin(), av.shape().end() - 1);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double total = 0.0;
    for (double v : av.row(r)) total += v;
    out[r] = total;
  }
  const std::size_t cols = av.cols();
  auto backward = [cols](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t r = 0; r < g.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) (*grads[0])[r * cols + c] += g[r];
  };
  return a.graph().record("sum_rows", std::move(out), {a}, std::move(backward));
}

Var softmax(Var a) {
  require_rows_nonempty(a.value(), "softmax");
  Tensor p = row_softmax(a.value());
  auto backward = [p](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto pr = p.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t k = 0; k < pr.size(); ++k) dot += gr[k] * pr[k];
      auto out = grads[0]->row(r);
      for (std::size_t k = 0; k < pr.size(); ++k) out[k] += pr[k] * (gr[k] - dot);
    }
  };
  return a.graph().record("softmax", std::move(p), {a}, std::move(backward));
}

Var log_softmax(Var a) {
  require_rows_nonempty(a.value(), "log_softmax");
  Tensor l = row_log_softmax(a.value());
  auto backward = [l](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t r = 0; r < l.rows(); ++r) {
      auto lr = l.row(r);
      auto gr = g.row(r);
      double gsum = 0.0;
      for (double v : gr) gsum += v;
      auto out = grads[0]->row(r);
      for (std::size_t k = 0; k < lr.size(); ++k) out[k] += gr[k] - std::exp(lr[k]) * gsum;
    }
  };
  return a.graph().record("log_softmax", std::move(l), {a}, std::move(backward));
}

Var l2_normalize(Var a) {
  const Tensor& av = a.value();
  require_rows_nonempty(av, "l2_normalize");
  Tensor out(av.shape());
  std::vector<double> norms(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double sq = 0.0;
    for (double v : av.row(r)) sq += v * v;
    norms[r] = std::max(std::sqrt(sq), kNormEpsilon);
    auto o = out.row(r);
    auto in = av.row(r);
    for (std::size_t k = 0; k < in.size(); ++k) o[k] = in[k] / norms[r];
  }
  auto backward = [av, norms = std::move(norms)](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t r = 0; r < av.rows(); ++r) {
      auto v = av.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * gr[k];
      const double n = norms[r];
      auto out = grads[0]->row(r);
      if (n == kNormEpsilon) {
        // Inside the floor the op is a fixed scaling.
        for (std::size_t k = 0; k < v.size(); ++k) out[k] += gr[k] / n;
        continue;
      }
      const double n3 = n * n * n;
      for (std::size_t k = 0; k < v.size(); ++k) out[k] += gr[k] / n - v[k] * dot / n3;
    }
  };
  return a.graph().record("l2_normalize", std::move(out), {a}, std::move(backward));
}

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchNormStats* stats) {
  require_same_graph(x, gamma, "batch_norm");
  require_same_graph(x, beta, "batch_norm");
  const Tensor& xv = x.value();
  require_rank2(xv, "batch_norm");
  const std::size_t n = xv.dim(0), f = xv.dim(1);
  if (n == 0) throw DimensionError("batch_norm on an empty batch");
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  if (gv.shape() != Shape{f} || bv.shape() != Shape{f}) {
    throw DimensionError("batch_norm scale/shift must have shape (" + std::to_string(f) + ")");
  }

  std::vector<double> mu(f, 0.0), var(f, 0.0), inv_std(f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) mu[j] += xv[i * f + j];
  for (double& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double d = xv[i * f + j] - mu[j];
      var[j] += d * d;
    }
  for (std::size_t j = 0; j < f; ++j) {
    var[j] /= static_cast<double>(n);
    inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  }

  Tensor xhat(Shape{n, f});
  Tensor out(Shape{n, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      xhat[i * f + j] = (xv[i * f + j] - mu[j]) * inv_std[j];
      out[i * f + j] = gv[j] * xhat[i * f + j] + bv[j];
    }
  if (stats != nullptr) {
    stats->mean = mu;
    stats->variance = var;
  }

  auto backward = [xhat, gv, inv_std, n, f](const Tensor& g, std::span<Tensor* const> grads) {
    std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        sum_g[j] += g[i * f + j];
        sum_gx[j] += g[i * f + j] * xhat[i * f + j];
      }
    if (grads[0] != nullptr) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
          const double k = gv[j] * inv_std[j] * inv_n;
          (*grads[0])[i * f + j] +=
              k * (static_cast<double>(n) * g[i * f + j] - sum_g[j] - xhat[i * f + j] * sum_gx[j]);
        }
    }
    if (grads[1] != nullptr)
      for (std::size_t j = 0; j < f; ++j) (*grads[1])[j] += sum_gx[j];
    if (grads[2] != nullptr)
      for (std::size_t j = 0; j < f; ++j) (*grads[2])[j] += sum_g[j];
  };
  return x.graph().record("batch_norm", std::move(out), {x, gamma, beta}, std::move(backward));
}

Var batch_norm_eval(Var x, Var gamma, Var beta, std::span<const double> running_mean,
                    std::span<const double> running_var, double eps) {
  require_same_graph(x, gamma, "batch_norm_eval");
  require_same_graph(x, beta, "batch_norm_eval");
  const Tensor& xv = x.value();
  require_rank2(xv, "batch_norm_eval");
  const std::size_t n = xv.dim(0), f = xv.dim(1);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  if (gv.shape() != Shape{f} || bv.shape() != Shape{f} || running_mean.size() != f ||
      running_var.size() != f) {
    throw DimensionError("batch_norm_eval parameters must have " + std::to_string(f) + " features");
  }
  std::vector<double> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(running_var[j] + eps);
  Tensor xhat(Shape{n, f});
  Tensor out(Shape{n, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      xhat[i * f + j] = (xv[i * f + j] - running_mean[j]) * inv_std[j];
      out[i * f + j] = gv[j] * xhat[i * f + j] + bv[j];
    }
  auto backward = [xhat, gv, inv_std, n, f](const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double gij = g[i * f + j];
        if (grads[0] != nullptr) (*grads[0])[i * f + j] += gij * gv[j] * inv_std[j];
        if (grads[1] != nullptr) (*grads[1])[j] += gij * xhat[i * f + j];
        if (grads[2] != nullptr) (*grads[2])[j] += gij;
      }
  };
  return x.graph().record("batch_norm_eval", std::move(out), {x, gamma, beta}, std::move(backward));
}

Var softmax_entropy_rows(Var logits) {
  const Tensor& z = logits.value();
  require_rows_nonempty(z, "softmax_entropy_rows");
  Tensor l = row_log_softmax(z);
  Shape out_shape(z.shape().begin(), z.shape().end() - 1);
  Tensor h(out_shape);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double acc = 0.0;
    for (double lk : l.row(r)) acc -= std::exp(lk) * lk;
    h[r] = acc;
  }
  auto backward = [l, h](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    for (std::size_t r = 0; r < l.rows(); ++r) {
      auto lr = l.row(r);
      auto out = grads[0]->row(r);
      for (std::size_t k = 0; k < lr.size(); ++k) out[k] -= g[r] * std::exp(lr[k]) * (lr[k] + h[r]);
    }
  };
  return logits.graph().record("softmax_entropy", std::move(h), {logits}, std::move(backward));
}

Var soft_cross_entropy(Var logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  require_rows_nonempty(z, "soft_cross_entropy");
  if (targets.shape() != z.shape()) {
    throw DimensionError("cross-entropy targets " + shape_to_string(targets.shape()) +
                         " vs logits " + shape_to_string(z.shape()));
  }
  Tensor l = row_log_softmax(z);
  const std::size_t rows = z.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) loss -= targets[i] * l[i];
  loss /= static_cast<double>(rows);
  auto backward = [l, targets, rows](const Tensor& g, std::span<Tensor* const> grads) {
    if (grads[0] == nullptr) return;
    const double k = g[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      auto lr = l.row(r);
      auto tr = targets.row(r);
      double tsum = 0.0;
      for (double t : tr) tsum += t;
      auto out = grads[0]->row(r);
      for (std::size_t c = 0; c < lr.size(); ++c) out[c] += k * (std::exp(lr[c]) * tsum - tr[c]);
    }
  };
  return logits.graph().record("cross_entropy", Tensor::scalar(loss), {logits}, std::move(backward));
}

}  // namespace fsl::ndgrad
