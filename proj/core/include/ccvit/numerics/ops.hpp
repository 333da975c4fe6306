#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ccvit/numerics/tape.hpp"

namespace ccvit::numerics {

// Row reference into one of several sources of a gather_rows call.
struct RowRef {
    std::uint32_t source = 0;
    std::uint32_t row = 0;
};

// a[m x k] * b[k x p]. Rank-2 operands only.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// x[m x k] * weight[k x p] + bias[p], bias repeated over the leading rows.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

// Elementwise product; shapes must match.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

// Sum of all elements, shape [1].
template <typename T>
Var<T> sum(Var<T> a);

template <typename T>
Var<T> transpose(Var<T> a);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

// Max-subtracted softmax along `axis` (negative counts from the end).
template <typename T>
Var<T> softmax(Var<T> a, std::ptrdiff_t axis = -1);

// Normalizes each row of the last axis with population variance, then
// applies gamma/beta. eps sits inside the square root, so constant rows map to
// beta.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-6));

// Exact erf form: x * Phi(x).
template <typename T>
Var<T> gelu(Var<T> x);

// Mean over rows of -log softmax(logits)[target]. Shape [1].
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> targets);

// Mean squared difference over all elements. Shape [1].
template <typename T>
Var<T> mse(Var<T> pred, Var<T> target);

// Concatenates rows drawn from several rank-2 sources with equal column
// count. Backward scatters back into the sources.
template <typename T>
Var<T> gather_rows(const std::vector<Var<T>>& sources, std::span<const RowRef> rows);

// out.flat[i] = src.flat[index[i]]; backward scatter-adds.
template <typename T>
Var<T> gather(Var<T> src, std::span<const std::size_t> index, Shape shape);

// Multi-head self-attention over `sequences` equal-length sequences stacked
// along the rows of qkv[(sequences*len) x 3d] (columns are q | k | v, each
// split into `heads` contiguous blocks). bias has shape [heads x len x len]
// and is added to the scaled logits. Returns [(sequences*len) x d]. When
// `probs` is non-null it receives the attention probabilities as
// [sequences x heads x len x len].
template <typename T>
Var<T> attention(Var<T> qkv, Var<T> bias, std::size_t sequences, std::size_t heads, Tensor<T>* probs = nullptr);

} // namespace ccvit::numerics
