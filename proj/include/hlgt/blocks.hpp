#pragma once

#include <string>
#include <vector>

#include "hlgt/ops.hpp"
#include "hlgt/rng.hpp"
#include "hlgt/tensor.hpp"

namespace hlgt {

// Uniform(-1/sqrt(d), 1/sqrt(d)) init for a rows x cols matrix; the fan-in
// d is the row count. Biases are zero-initialized elsewhere.
template <class S>
TensorT<S> init_matrix(int64_t rows, int64_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  TensorT<S> t(rows, cols, S(0), true);
  for (auto& v : t.values()) v = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

template <class S>
using NamedParams = std::vector<TensorT<S>>;

template <class S>
void collect_param(NamedParams<S>& out, TensorT<S>& t, const std::string& name) {
  t.set_name(name);
  t.set_requires_grad(true);
  out.push_back(t);
}

// Transformer block parameters: query/key/value projections, two-layer FFN
// (hidden width 4D, GELU), and the two post-norm layer norms.
template <class S>
struct TrmParamsT {
  TensorT<S> w_q, w_k, w_v;        // D x D
  TensorT<S> ffn_w1, ffn_b1;       // D x 4D, 1 x 4D
  TensorT<S> ffn_w2, ffn_b2;       // 4D x D, 1 x D
  TensorT<S> norm1_g, norm1_b;     // 1 x D
  TensorT<S> norm2_g, norm2_b;     // 1 x D
  int heads = 1;

  static TrmParamsT init(int64_t d, int heads, Rng& rng);
  void collect(const std::string& prefix, NamedParams<S>& out);
};

// Attention-aware fusion parameters; scores one scalar per token.
template <class S>
struct FusionParamsT {
  TensorT<S> w5;  // D x hidden
  TensorT<S> b1;  // 1 x hidden
  TensorT<S> w4;  // hidden x 1
  TensorT<S> b2;  // 1 x 1

  static FusionParamsT init(int64_t d, int64_t hidden, Rng& rng);
  void collect(const std::string& prefix, NamedParams<S>& out);
};

// Sinusoidal positional table: row t holds
//   [sin(t/10000^(0/dim)), cos(t/10000^(0/dim)), sin(t/10000^(2/dim)), ...]
// with the sin/cos pair at columns (2j, 2j+1) sharing exponent 2j/dim.
template <class S>
struct PositionalEncodingT {
  int64_t dim = 0;
  int64_t max_len = 0;
  TensorT<S> table;  // max_len x dim, constant

  static PositionalEncodingT make(int64_t dim, int64_t max_len);
  // The encoding vector of one position, 1 x dim.
  TensorT<S> at(int64_t t) const;
  // First n rows of the table (positions 0..n-1).
  TensorT<S> rows(int64_t n) const;
};

// Scaled dot-product multi-head attention on already-projected inputs.
// Splits D into `heads` slices, per head softmax(Q Kh^T / sqrt(D/heads)) Vh,
// concatenates head outputs. Each output row is a per-head convex
// combination of value rows.
template <class S>
TensorT<S> mha_core(const TensorT<S>& queries, const TensorT<S>& keys,
                    const TensorT<S>& values, int heads);

// Cross-attention transformer block in post-norm layout:
//   a = mha(q_in W_q, kv W_k, kv W_v); x = LN(q_in + a); y = LN(x + FFN(x)).
template <class S>
TensorT<S> trm_block(const TensorT<S>& q_in, const TensorT<S>& kv,
                     const TrmParamsT<S>& p);

// Self-attention transformer over one sequence.
template <class S>
TensorT<S> trm_forward(const TensorT<S>& seq, const TrmParamsT<S>& p);

// Two-layer FFN with GELU, hidden width 4D.
template <class S>
TensorT<S> ffn_forward(const TensorT<S>& x, const TrmParamsT<S>& p);

// Soft-attention pooling of an SxD token sequence into one 1xD vector.
// `valid`, when non-empty, marks which tokens participate in the softmax.
template <class S>
TensorT<S> attention_fusion(const TensorT<S>& seq, const FusionParamsT<S>& p,
                            const std::vector<uint8_t>& valid = {});

}  // namespace hlgt
