#pragma once

#include <vector>

#include "diffcore/tensor.hpp"

namespace anchorforge::diff {

// Binary elementwise ops broadcast by trailing dimensions: the smaller
// operand's shape must equal a suffix of the larger one's.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);
template <typename T> Tensor<T> silu(const Tensor<T>& a);

/// gamma * x + beta, with gamma and beta broadcast over x.
template <typename T>
Tensor<T> scale_shift(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);

/// [m,k] x [k,n] -> [m,n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., k] * w[k, n] + bias[n]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last axis. Zero-variance rows map to zeros.
template <typename T> Tensor<T> layer_norm(const Tensor<T>& x, T eps = T(kLayerNormEps));
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(kLayerNormEps));

/// softmax(q k^T / sqrt(dk)) v per head, with no mask of any kind.
/// q: [h, s, dk], k: [h, S, dk], v: [h, S, dv] -> [h, s, dv].
template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

/// The [h, s, S] weight matrix softmax_attention would use (no graph).
template <typename T> Array<T> attention_weights(const Array<T>& q, const Array<T>& k);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length);

/// Rows of table[V, D] selected by ids -> [ids.size(), D].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& ids);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

}  // namespace anchorforge::diff
