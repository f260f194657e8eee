#pragma once

#include <cstdint>
#include <vector>

#include "hlgt/tensor.hpp"

// Primitive tensor operations. Each op computes its value eagerly, checks
// the result for NaN/Inf, and, when a tape is active and an input carries
// gradient, records a backward closure. Shapes must match exactly; the only
// broadcast forms are the explicit row ops (add_row_bias, repeat_row).

namespace hlgt {

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> transpose(const TensorT<S>& x);

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b);

// Element-wise (Hadamard) product.
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> scale(const TensorT<S>& x, S c);

template <class S>
TensorT<S> add_scalar(const TensorT<S>& x, S c);

template <class S>
TensorT<S> neg(const TensorT<S>& x) {
  return scale(x, S(-1));
}

// out[r][c] = x[r][c] + bias[0][c]; the one permitted broadcast.
template <class S>
TensorT<S> add_row_bias(const TensorT<S>& x, const TensorT<S>& bias);

// n copies of a 1xD row stacked into an nxD matrix.
template <class S>
TensorT<S> repeat_row(const TensorT<S>& v, int64_t n);

// Scale by a learnable 1x1 tensor (gradient flows to both arguments).
template <class S>
TensorT<S> scale_by(const TensorT<S>& x, const TensorT<S>& s);

template <class S>
TensorT<S> sum(const TensorT<S>& x);

template <class S>
TensorT<S> mean(const TensorT<S>& x);

// Lx1 column of per-row sums.
template <class S>
TensorT<S> row_sums(const TensorT<S>& x);

template <class S>
TensorT<S> gelu(const TensorT<S>& x);

template <class S>
TensorT<S> tanh(const TensorT<S>& x);

template <class S>
TensorT<S> exp(const TensorT<S>& x);

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x);

template <class S>
TensorT<S> sqrt(const TensorT<S>& x);

template <class S>
TensorT<S> abs(const TensorT<S>& x);

// Clamp to [0,1]; zero subgradient outside the range.
template <class S>
TensorT<S> clamp01(const TensorT<S>& x);

// Element-wise max/min; ties route the gradient to the first argument.
template <class S>
TensorT<S> maximum(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
TensorT<S> minimum(const TensorT<S>& a, const TensorT<S>& b);

// Row-wise softmax with per-row max subtraction. Rows sum to 1.
template <class S>
TensorT<S> softmax_rows(const TensorT<S>& x);

// Softmax restricted to columns with valid[c] != 0; masked-out entries are
// exactly zero and receive no gradient. At least one column must be valid.
template <class S>
TensorT<S> softmax_rows_masked(const TensorT<S>& x, const std::vector<uint8_t>& valid);

// Row-wise concatenation of features: (m x d1, m x d2) -> m x (d1+d2).
template <class S>
TensorT<S> concat_cols(const TensorT<S>& a, const TensorT<S>& b);

// Stack matrices with equal column counts on top of each other.
template <class S>
TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts);

// Copy of the submatrix [r0, r0+nr) x [c0, c0+nc); gradient scatter-adds back.
template <class S>
TensorT<S> slice(const TensorT<S>& x, int64_t r0, int64_t nr, int64_t c0, int64_t nc);

// Per-row layer normalization with learnable gain/bias (both 1xD).
template <class S>
TensorT<S> layer_norm_rows(const TensorT<S>& x, const TensorT<S>& gain,
                           const TensorT<S>& bias, S eps = S(1e-5));

// --- small composites ---

template <class S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  return add_row_bias(matmul(x, w), b);
}

// 1xD mean of the rows of a PxD matrix.
template <class S>
TensorT<S> mean_rows(const TensorT<S>& x) {
  TensorT<S> w(1, x.rows(), S(1) / static_cast<S>(x.rows()));
  return matmul(w, x);
}

}  // namespace hlgt
