#pragma once

// Differentiable operations over ad::Tensor. Rank-2 ops treat a rank-1
// tensor of length n as a 1 x n row unless stated otherwise. Shape errors
// throw DimensionError naming the offending shapes.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "deepdtf/tensor.hpp"

namespace deepdtf::ad {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // rank 2
Tensor reshape(const Tensor& a, Shape shape);

// Elementwise, identical shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Broadcasts: row vector b[n] added to every row of a[m,n]; column vector
// b[m] added to (or multiplied into) every column of a[m,n].
Tensor add_row(const Tensor& a, const Tensor& b);
Tensor add_col(const Tensor& a, const Tensor& b);
Tensor mul_col(const Tensor& a, const Tensor& w);

// scale * x + shift
Tensor affine(const Tensor& x, double scale, double shift);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
// x^p for x >= 0.
Tensor pow(const Tensor& x, double p);
// Gradient is zero where the value was clamped.
Tensor clamp(const Tensor& x, double lo, double hi);

// Reductions. sum/mean without axis return a scalar of shape [1]; with an
// axis a rank-2 input reduces to rank 1.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor max(const Tensor& x, std::size_t axis);  // ties: first index wins

// Stable softmax along `axis` (row max subtracted internally).
Tensor softmax(const Tensor& x, std::size_t axis);
// Row softmax of a[m,n] restricted to valid columns. Invalid columns get
// weight exactly 0; rows whose query is invalid are all zero.
Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> key_valid,
                           std::span<const std::uint8_t> query_valid);

// Normalizes over the last axis, then applies gain[n] and bias[n].
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps);

// Cross-correlation. x[c_in,len], kernels[c_out,c_in,k], bias[c_out] optional.
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);
std::size_t conv1d_out_len(std::size_t len, std::size_t k, std::size_t stride,
                           std::size_t padding);

// Average x[c,len] into out_len bins per channel (bin i covers
// [floor(i*len/out), ceil((i+1)*len/out)) ).
Tensor adaptive_avg_pool1d(const Tensor& x, std::size_t out_len);

// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
// Half-open [begin, end) along `axis` of a rank-2 tensor.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);

// Embedding lookup: out[i] = table[index[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index);
// out[index[i]] += src[i], out has n_rows rows.
Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> index,
                        std::size_t n_rows);

// Inverted dropout. In eval mode (or p == 0) returns x unchanged.
Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng);

// Uniform double in [0,1) from 53 random bits; stable across platforms.
double uniform01(std::mt19937_64& rng);

}  // namespace deepdtf::ad
