#include "deepdtf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "deepdtf/error.hpp"

namespace deepdtf::ad {

namespace {

using BackwardFn = std::function<void(Node&)>;

Tensor make_op(Shape shape, std::vector<double> value,
               std::initializer_list<const Tensor*> inputs, BackwardFn bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || t->requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor* t : inputs) node->inputs.push_back(t->node());
      node->backward = std::move(bw);
    }
  }
  return Tensor(std::move(node));
}

Tensor make_op_n(Shape shape, std::vector<double> value,
                 std::span<const Tensor> inputs, BackwardFn bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const Tensor& t : inputs) node->inputs.push_back(t.node());
      node->backward = std::move(bw);
    }
  }
  return Tensor(std::move(node));
}

// Gradient buffer of input i, or an empty span if it does not need one.
std::span<double> in_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return {};
  return in.grad_buffer();
}

const std::vector<double>& in_value(Node& self, std::size_t i) {
  return self.inputs[i]->value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank_le2(const Tensor& a, const char* op) {
  if (a.rank() > 2) {
    throw DimensionError(std::string(op) + ": expected rank <= 2, got " +
                         shape_str(a.shape()));
  }
}

Shape shape2(std::size_t r, std::size_t c) { return {r, c}; }

template <class F, class G>
Tensor unary(const Tensor& x, F forward, G derivative) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xv[i]);
  return make_op(x.shape(), std::move(out), {&x}, [derivative](Node& self) {
    auto g = in_grad(self, 0);
    const auto& xin = in_value(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * derivative(xin[i], self.value[i]);
    }
  });
}

}  // namespace

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op(shape2(m, n), std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const auto& av = in_value(self, 0);
    const auto& bv = in_value(self, 1);
    const auto& dc = self.grad;
    // dA = dC * B^T
    if (auto da = in_grad(self, 0); !da.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dc[i * n + j] * bv[p * n + j];
          da[i * k + p] += acc;
        }
      }
    }
    // dB = A^T * dC
    if (auto db = in_grad(self, 1); !db.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * dc[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op(shape2(n, m), std::move(out), {&a}, [m, n](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op(std::move(shape), std::move(out), {&a}, [](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto g = in_grad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    auto ga = in_grad(self, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    auto gb = in_grad(self, 1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& av = in_value(self, 0);
    const auto& bv = in_value(self, 1);
    if (auto ga = in_grad(self, 0); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bv[i];
    if (auto gb = in_grad(self, 1); !gb.empty())
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * av[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  require_rank_le2(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (b.numel() != n) {
    throw DimensionError("add_row: bias " + shape_str(b.shape()) +
                         " does not match columns of " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_op(a.shape(), std::move(out), {&a, &b}, [m, n](Node& self) {
    if (auto ga = in_grad(self, 0); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    if (auto gb = in_grad(self, 1); !gb.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
  });
}

Tensor add_col(const Tensor& a, const Tensor& b) {
  require_rank_le2(a, "add_col");
  const std::size_t m = a.rows(), n = a.cols();
  if (b.numel() != m) {
    throw DimensionError("add_col: vector " + shape_str(b.shape()) +
                         " does not match rows of " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [m, n](Node& self) {
    if (auto ga = in_grad(self, 0); !ga.empty())
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    if (auto gb = in_grad(self, 1); !gb.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[i] += self.grad[i * n + j];
  });
}

Tensor mul_col(const Tensor& a, const Tensor& w) {
  require_rank_le2(a, "mul_col");
  const std::size_t m = a.rows(), n = a.cols();
  if (w.numel() != m) {
    throw DimensionError("mul_col: vector " + shape_str(w.shape()) +
                         " does not match rows of " + shape_str(a.shape()));
  }
  std::vector<double> out(a.numel());
  auto av = a.data();
  auto wv = w.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * wv[i];
  return make_op(a.shape(), std::move(out), {&a, &w}, [m, n](Node& self) {
    const auto& av = in_value(self, 0);
    const auto& wv = in_value(self, 1);
    if (auto ga = in_grad(self, 0); !ga.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i * n + j] * wv[i];
    if (auto gw = in_grad(self, 1); !gw.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gw[i] += self.grad[i * n + j] * av[i * n + j];
  });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary(
      x, [=](double v) { return scale * v + shift; },
      [=](double, double) { return scale; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v < 0.0 ? 0.0 : v; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [=](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor pow(const Tensor& x, double p) {
  return unary(
      x, [p](double v) { return p == 0.0 ? 1.0 : std::pow(v, p); },
      [p](double v, double) {
        if (p == 0.0) return 0.0;
        if (v == 0.0) return p == 1.0 ? 1.0 : (p > 1.0 ? 0.0 : std::numeric_limits<double>::infinity());
        return p * std::pow(v, p - 1.0);
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [=](double v) { return std::clamp(v, lo, hi); },
      [=](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op({1}, {s}, {&x}, [](Node& self) {
    auto g = in_grad(self, 0);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op({1}, {s / n}, {&x}, [n](Node& self) {
    auto g = in_grad(self, 0);
    for (double& v : g) v += self.grad[0] / n;
  });
}

namespace {

Tensor reduce_axis(const Tensor& x, std::size_t axis, bool average) {
  require_rank_le2(x, "reduce");
  if (axis > 1) throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range");
  const std::size_t m = x.rows(), n = x.cols();
  const std::size_t out_n = axis == 0 ? n : m;
  const double denom = average ? static_cast<double>(axis == 0 ? m : n) : 1.0;
  std::vector<double> out(out_n, 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += xv[i * n + j];
  for (double& v : out) v /= denom;
  return make_op({out_n}, std::move(out), {&x}, [m, n, axis, denom](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += self.grad[axis == 0 ? j : i] / denom;
  });
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, false); }
Tensor mean(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, true); }

Tensor max(const Tensor& x, std::size_t axis) {
  require_rank_le2(x, "max");
  if (axis > 1) throw DimensionError("max: axis " + std::to_string(axis) + " out of range");
  const std::size_t m = x.rows(), n = x.cols();
  const std::size_t out_n = axis == 0 ? n : m;
  std::vector<double> out(out_n, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> argmax(out_n, 0);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t o = axis == 0 ? j : i;
      if (xv[i * n + j] > out[o]) {
        out[o] = xv[i * n + j];
        argmax[o] = i * n + j;
      }
    }
  }
  return make_op({out_n}, std::move(out), {&x}, [argmax](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_rank_le2(x, "softmax");
  const std::size_t m = x.rows(), n = x.cols();
  if (axis > 1 || (x.rank() == 1 && axis != 0)) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  }
  // Rank 1 reduces over its only axis, which is the "columns" of the 1 x n view.
  const bool over_cols = x.rank() == 1 || axis == 1;
  const std::size_t groups = over_cols ? m : n;
  const std::size_t len = over_cols ? n : m;
  auto idx = [=](std::size_t g, std::size_t t) {
    return over_cols ? g * n + t : t * n + g;
  };
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t g = 0; g < groups; ++g) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, xv[idx(g, t)]);
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      out[idx(g, t)] = std::exp(xv[idx(g, t)] - mx);
      z += out[idx(g, t)];
    }
    for (std::size_t t = 0; t < len; ++t) out[idx(g, t)] /= z;
  }
  return make_op(x.shape(), std::move(out), {&x}, [=](Node& self) {
    auto g = in_grad(self, 0);
    const auto& y = self.value;
    for (std::size_t gr = 0; gr < groups; ++gr) {
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += self.grad[idx(gr, t)] * y[idx(gr, t)];
      for (std::size_t t = 0; t < len; ++t)
        g[idx(gr, t)] += y[idx(gr, t)] * (self.grad[idx(gr, t)] - dot);
    }
  });
}

Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> key_valid,
                           std::span<const std::uint8_t> query_valid) {
  require_rank_le2(x, "masked_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (key_valid.size() != n || query_valid.size() != m) {
    throw DimensionError("masked_softmax_rows: mask sizes " + std::to_string(query_valid.size()) +
                         "x" + std::to_string(key_valid.size()) + " vs scores " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (!query_valid[i]) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (key_valid[j]) mx = std::max(mx, xv[i * n + j]);
    if (!std::isfinite(mx)) continue;  // no valid key
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!key_valid[j]) continue;
      out[i * n + j] = std::exp(xv[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  // Masked entries have y == 0, so the plain softmax backward leaves them zero.
  return make_op(x.shape(), std::move(out), {&x}, [m, n](Node& self) {
    auto g = in_grad(self, 0);
    const auto& y = self.value;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank_le2(x, "layernorm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layernorm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  }
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  std::vector<double> out(m * n);
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return make_op(x.shape(), std::move(out), {&x, &gain, &bias},
                 [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   const auto& gv = in_value(self, 1);
                   const auto& dy = self.grad;
                   if (auto gx = in_grad(self, 0); !gx.empty()) {
                     const double nn = static_cast<double>(n);
                     for (std::size_t i = 0; i < m; ++i) {
                       double s1 = 0.0, s2 = 0.0;
                       for (std::size_t j = 0; j < n; ++j) {
                         const double dxh = dy[i * n + j] * gv[j];
                         s1 += dxh;
                         s2 += dxh * xhat[i * n + j];
                       }
                       for (std::size_t j = 0; j < n; ++j) {
                         const double dxh = dy[i * n + j] * gv[j];
                         gx[i * n + j] += inv_std[i] * (dxh - s1 / nn - xhat[i * n + j] * s2 / nn);
                       }
                     }
                   }
                   if (auto gg = in_grad(self, 1); !gg.empty())
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) gg[j] += dy[i * n + j] * xhat[i * n + j];
                   if (auto gb = in_grad(self, 2); !gb.empty())
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) gb[j] += dy[i * n + j];
                 });
}

std::size_t conv1d_out_len(std::size_t len, std::size_t k, std::size_t stride,
                           std::size_t padding) {
  if (stride == 0) throw DimensionError("conv1d: stride must be positive");
  if (k == 0 || k > len + 2 * padding) {
    throw DimensionError("conv1d: kernel size " + std::to_string(k) +
                         " exceeds padded input length " + std::to_string(len + 2 * padding));
  }
  return (len + 2 * padding - k) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  if (x.rank() != 2 || kernels.rank() != 3 || kernels.dim(1) != x.dim(0)) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " vs kernels " +
                         shape_str(kernels.shape()));
  }
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = kernels.dim(0), k = kernels.dim(2);
  const std::size_t out_len = conv1d_out_len(len, k, stride, padding);
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != c_out) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " vs " +
                         std::to_string(c_out) + " output channels");
  }
  std::vector<double> out(c_out * out_len, 0.0);
  auto xv = x.data();
  auto wv = kernels.data();
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = has_bias ? bias.data()[o] : 0.0;
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t q = 0; q < k; ++q) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + q) -
                                     static_cast<std::ptrdiff_t>(padding);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += wv[(o * c_in + c) * k + q] * xv[c * len + static_cast<std::size_t>(pos)];
        }
      }
      out[o * out_len + t] = acc;
    }
  }
  BackwardFn bw = [=](Node& self) {
    const auto& xv = in_value(self, 0);
    const auto& wv = in_value(self, 1);
    auto gx = in_grad(self, 0);
    auto gw = in_grad(self, 1);
    for (std::size_t o = 0; o < c_out; ++o) {
      for (std::size_t t = 0; t < out_len; ++t) {
        const double dy = self.grad[o * out_len + t];
        if (dy == 0.0) continue;
        for (std::size_t c = 0; c < c_in; ++c) {
          for (std::size_t q = 0; q < k; ++q) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + q) -
                                       static_cast<std::ptrdiff_t>(padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
            const std::size_t xi = c * len + static_cast<std::size_t>(pos);
            const std::size_t wi = (o * c_in + c) * k + q;
            if (!gx.empty()) gx[xi] += dy * wv[wi];
            if (!gw.empty()) gw[wi] += dy * xv[xi];
          }
        }
      }
    }
    if (has_bias) {
      if (auto gb = in_grad(self, 2); !gb.empty())
        for (std::size_t o = 0; o < c_out; ++o)
          for (std::size_t t = 0; t < out_len; ++t) gb[o] += self.grad[o * out_len + t];
    }
  };
  if (has_bias) return make_op(shape2(c_out, out_len), std::move(out), {&x, &kernels, &bias}, bw);
  return make_op(shape2(c_out, out_len), std::move(out), {&x, &kernels}, bw);
}

Tensor adaptive_avg_pool1d(const Tensor& x, std::size_t out_len) {
  require_rank_le2(x, "adaptive_avg_pool1d");
  if (out_len == 0) throw DimensionError("adaptive_avg_pool1d: output length must be positive");
  const std::size_t c = x.rows(), len = x.cols();
  std::vector<std::size_t> lo(out_len), hi(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    lo[i] = (i * len) / out_len;
    hi[i] = ((i + 1) * len + out_len - 1) / out_len;
  }
  std::vector<double> out(c * out_len, 0.0);
  auto xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < out_len; ++i) {
      double s = 0.0;
      for (std::size_t t = lo[i]; t < hi[i]; ++t) s += xv[ch * len + t];
      out[ch * out_len + i] = s / static_cast<double>(hi[i] - lo[i]);
    }
  }
  return make_op(shape2(c, out_len), std::move(out), {&x}, [=](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < out_len; ++i) {
        const double d = self.grad[ch * out_len + i] / static_cast<double>(hi[i] - lo[i]);
        for (std::size_t t = lo[i]; t < hi[i]; ++t) g[ch * len + t] += d;
      }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const Tensor& p : parts) require_rank_le2(p, "concat");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::vector<std::size_t> extent;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const std::size_t f = axis == 0 ? p.cols() : p.rows();
    if (f != fixed) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " does not align with " +
                           shape_str(parts[0].shape()) + " along axis " + std::to_string(axis));
    }
    extent.push_back(axis == 0 ? p.rows() : p.cols());
    total += extent.back();
  }
  const std::size_t m = axis == 0 ? total : fixed;
  const std::size_t n = axis == 0 ? fixed : total;
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    const std::size_t pr = parts[k].rows(), pc = parts[k].cols();
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j) {
        const std::size_t oi = axis == 0 ? off + i : i;
        const std::size_t oj = axis == 0 ? j : off + j;
        out[oi * n + oj] = pv[i * pc + j];
      }
    off += extent[k];
  }
  return make_op_n(shape2(m, n), std::move(out), parts, [=](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < extent.size(); ++k) {
      auto g = in_grad(self, k);
      const std::size_t pr = axis == 0 ? extent[k] : m;
      const std::size_t pc = axis == 0 ? n : extent[k];
      if (!g.empty()) {
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < pc; ++j) {
            const std::size_t oi = axis == 0 ? off + i : i;
            const std::size_t oj = axis == 0 ? j : off + j;
            g[i * pc + j] += self.grad[oi * n + oj];
          }
      }
      off += extent[k];
    }
  });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_rank_le2(x, "slice");
  const std::size_t m = x.rows(), n = x.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if (axis > 1 || begin >= end || end > extent) {
    throw DimensionError("slice: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") along axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const std::size_t om = axis == 0 ? end - begin : m;
  const std::size_t on = axis == 0 ? n : end - begin;
  std::vector<double> out(om * on);
  auto xv = x.data();
  for (std::size_t i = 0; i < om; ++i)
    for (std::size_t j = 0; j < on; ++j)
      out[i * on + j] = xv[(axis == 0 ? i + begin : i) * n + (axis == 0 ? j : j + begin)];
  return make_op(shape2(om, on), std::move(out), {&x}, [=](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t i = 0; i < om; ++i)
      for (std::size_t j = 0; j < on; ++j)
        g[(axis == 0 ? i + begin : i) * n + (axis == 0 ? j : j + begin)] += self.grad[i * on + j];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index) {
  require_rank_le2(table, "gather_rows");
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= v) {
      throw DimensionError("gather_rows: index " + std::to_string(idx[i]) +
                           " out of range for table " + shape_str(table.shape()));
    }
    std::copy_n(&tv[idx[i] * d], d, &out[i * d]);
  }
  return make_op(shape2(idx.size(), d), std::move(out), {&table}, [idx, d](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> index,
                        std::size_t n_rows) {
  require_rank_le2(src, "scatter_add_rows");
  if (index.size() != src.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) +
                         " indices for source " + shape_str(src.shape()));
  }
  if (n_rows == 0) throw DimensionError("scatter_add_rows: n_rows must be positive");
  const std::size_t d = src.cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(n_rows * d, 0.0);
  auto sv = src.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n_rows) {
      throw DimensionError("scatter_add_rows: index " + std::to_string(idx[i]) +
                           " out of range for " + std::to_string(n_rows) + " rows");
    }
    for (std::size_t j = 0; j < d; ++j) out[idx[i] * d + j] += sv[i * d + j];
  }
  return make_op(shape2(n_rows, d), std::move(out), {&src}, [idx, d](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[idx[i] * d + j];
  });
}

Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (!train || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  return make_op(x.shape(), std::move(out), {&x}, [mask = std::move(mask)](Node& self) {
    auto g = in_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

}  // namespace deepdtf::ad
