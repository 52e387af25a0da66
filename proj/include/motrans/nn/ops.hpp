#pragma once

#include <cstdint>
#include <vector>

#include "motrans/nn/tensor.hpp"

namespace motrans::nn {

// Row-major token ids, `rows` sequences padded to `cols` positions.
struct TokenBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;

  int at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  // 1 where the id differs from pad.
  std::vector<std::uint8_t> mask(int pad_id) const;
};

// x[..., in] * w[in, out] + b[out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Normalizes the last axis, then applies gamma * xhat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

// Scaled dot-product attention over already-projected q [B,Tq,d] and k, v
// [B,Tk,d], split into `heads` heads. `key_mask` (B*Tk, optional) marks
// attendable keys. When `probs` is non-null it receives the attention weights
// laid out [B, heads, Tq, Tk].
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads, bool causal,
                    const std::vector<std::uint8_t>* key_mask = nullptr, std::vector<T>* probs = nullptr);

// table[V, d] rows gathered for each id, multiplied by `factor`: [rows, cols, d].
template <typename T>
Tensor<T> embed(const TokenBatch& tokens, const Tensor<T>& table, T factor);

// Fixed sinusoidal position signal for `length` positions of width d.
template <typename T>
std::vector<T> sinusoid_table(std::size_t length, std::size_t d);

// x[B,T,d] + sinusoid_table(T, d) broadcast over the batch.
template <typename T>
Tensor<T> positional_encode(const Tensor<T>& x);

// Mean token cross-entropy of logits [B,T,V] against targets (B*T ids),
// skipping positions whose target is pad_id.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets, int pad_id);

// Number of targets that are not pad_id.
std::size_t count_targets(const std::vector<int>& targets, int pad_id);

// sum_i x_i * weights_i
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights);

}  // namespace motrans::nn
