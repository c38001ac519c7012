#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vld/tensor/tape.hpp"

// Differentiable primitives. Every op records its output on the tape of its
// first operand. Ops documented as "row-wise" treat a tensor of shape
// [..., n] as rows of length n.
namespace vld::ops {

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);

// x[..., n] + row[n], broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> x, Var<T> row);
// x[..., n] * row[n], broadcast over rows.
template <typename T>
Var<T> mul_row(Var<T> x, Var<T> row);

// [m x k] . [k x n] -> [m x n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> x);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> tanh(Var<T> x);

// Row-wise softmax over the last axis, max-subtracted.
template <typename T>
Var<T> softmax(Var<T> x);

// Row-wise layer normalization with learned gain and bias of width n.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

// x[..., in] . W^T + bias, where W row i = g[i] * v[i] / ||v[i]||.
template <typename T>
Var<T> weight_norm_linear(Var<T> x, Var<T> v, Var<T> g, Var<T> bias);

// x[..., in] . W[in x out] + bias[out]
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

// Rows of `table` selected by `indices` (embedding lookup).
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> indices);

// Stack 2-D operands with a common column count.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

// Inverted dropout; identity when rate == 0.
template <typename T>
Var<T> dropout(Var<T> x, double rate, std::mt19937_64& rng);

// Attention probabilities per head, [heads][query][key], for instrumentation.
struct AttentionTrace {
  std::size_t heads = 0;
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<double> weights;
};

struct AttentionOptions {
  std::size_t heads = 1;
  // Query i may only attend keys j <= i.
  bool causal = false;
  std::vector<AttentionTrace>* trace = nullptr;
};

// Scaled dot-product attention over already-projected q[Tq x d], k[Tk x d],
// v[Tk x d], split into `heads` contiguous column blocks.
template <typename T>
Var<T> multi_head_attention(Var<T> q, Var<T> k, Var<T> v, const AttentionOptions& options);

// Mean over rows of -log softmax(logits)[target]; rows whose target equals
// `ignore` do not contribute.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> targets, std::size_t ignore);

// Sum over classes of binary cross-entropy with logits, averaged over rows.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets);

}  // namespace vld::ops
