#include "hlgt/blocks.hpp"

#include <cmath>

namespace hlgt {

template <class S>
TrmParamsT<S> TrmParamsT<S>::init(int64_t d, int heads, Rng& rng) {
  if (heads < 1 || d % heads != 0)
    throw ShapeError("trm: model dim " + std::to_string(d) +
                     " not divisible by head count " + std::to_string(heads));
  TrmParamsT<S> p;
  p.heads = heads;
  p.w_q = init_matrix<S>(d, d, rng);
  p.w_k = init_matrix<S>(d, d, rng);
  p.w_v = init_matrix<S>(d, d, rng);
  p.ffn_w1 = init_matrix<S>(d, 4 * d, rng);
  p.ffn_b1 = TensorT<S>(1, 4 * d, S(0), true);
  p.ffn_w2 = init_matrix<S>(4 * d, d, rng);
  p.ffn_b2 = TensorT<S>(1, d, S(0), true);
  p.norm1_g = TensorT<S>(1, d, S(1), true);
  p.norm1_b = TensorT<S>(1, d, S(0), true);
  p.norm2_g = TensorT<S>(1, d, S(1), true);
  p.norm2_b = TensorT<S>(1, d, S(0), true);
  return p;
}

template <class S>
void TrmParamsT<S>::collect(const std::string& prefix, NamedParams<S>& out) {
  collect_param(out, w_q, prefix + ".w_q");
  collect_param(out, w_k, prefix + ".w_k");
  collect_param(out, w_v, prefix + ".w_v");
  collect_param(out, ffn_w1, prefix + ".ffn_w1");
  collect_param(out, ffn_b1, prefix + ".ffn_b1");
  collect_param(out, ffn_w2, prefix + ".ffn_w2");
  collect_param(out, ffn_b2, prefix + ".ffn_b2");
  collect_param(out, norm1_g, prefix + ".norm1_g");
  collect_param(out, norm1_b, prefix + ".norm1_b");
  collect_param(out, norm2_g, prefix + ".norm2_g");
  collect_param(out, norm2_b, prefix + ".norm2_b");
}

template <class S>
FusionParamsT<S> FusionParamsT<S>::init(int64_t d, int64_t hidden, Rng& rng) {
  FusionParamsT<S> p;
  p.w5 = init_matrix<S>(d, hidden, rng);
  p.b1 = TensorT<S>(1, hidden, S(0), true);
  p.w4 = init_matrix<S>(hidden, 1, rng);
  p.b2 = TensorT<S>(1, 1, S(0), true);
  return p;
}

template <class S>
void FusionParamsT<S>::collect(const std::string& prefix, NamedParams<S>& out) {
  collect_param(out, w5, prefix + ".w5");
  collect_param(out, b1, prefix + ".b1");
  collect_param(out, w4, prefix + ".w4");
  collect_param(out, b2, prefix + ".b2");
}

template <class S>
PositionalEncodingT<S> PositionalEncodingT<S>::make(int64_t dim, int64_t max_len) {
  if (dim < 2 || dim % 2 != 0)
    throw ShapeError("positional encoding dim must be a positive even number, got " +
                     std::to_string(dim));
  if (max_len < 1) throw ShapeError("positional encoding max_len must be positive");
  PositionalEncodingT<S> pe;
  pe.dim = dim;
  pe.max_len = max_len;
  pe.table = TensorT<S>(max_len, dim);
  for (int64_t t = 0; t < max_len; ++t) {
    for (int64_t j = 0; 2 * j < dim; ++j) {
      const double freq =
          std::pow(10000.0, static_cast<double>(2 * j) / static_cast<double>(dim));
      const double arg = static_cast<double>(t) / freq;
      pe.table.at(t, 2 * j) = static_cast<S>(std::sin(arg));
      pe.table.at(t, 2 * j + 1) = static_cast<S>(std::cos(arg));
    }
  }
  return pe;
}

template <class S>
TensorT<S> PositionalEncodingT<S>::at(int64_t t) const {
  if (t < 0 || t >= max_len)
    throw ShapeError("positional encoding index " + std::to_string(t) +
                     " outside [0, " + std::to_string(max_len) + ")");
  TensorT<S> row(1, dim);
  for (int64_t c = 0; c < dim; ++c) row.at(0, c) = table.at(t, c);
  return row;
}

template <class S>
TensorT<S> PositionalEncodingT<S>::rows(int64_t n) const {
  if (n < 1 || n > max_len)
    throw ShapeError("positional encoding: requested " + std::to_string(n) +
                     " rows, table holds " + std::to_string(max_len));
  TensorT<S> out(n, dim);
  std::copy(table.values().begin(), table.values().begin() + n * dim,
            out.values().begin());
  return out;
}

template <class S>
TensorT<S> mha_core(const TensorT<S>& queries, const TensorT<S>& keys,
                    const TensorT<S>& values, int heads) {
  if (keys.rows() < 1) throw ShapeError("mha: empty key/value sequence");
  if (keys.rows() != values.rows())
    throw ShapeError("mha: key count " + std::to_string(keys.rows()) +
                     " != value count " + std::to_string(values.rows()));
  const int64_t d = queries.cols();
  if (keys.cols() != d || values.cols() != d)
    throw ShapeError("mha: feature dims differ across q/k/v");
  if (heads < 1 || d % heads != 0)
    throw ShapeError("mha: dim " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const int64_t dh = d / heads;
  const S inv_scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
  std::vector<TensorT<S>> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = slice(queries, 0, queries.rows(), h * dh, dh);
    auto kh = slice(keys, 0, keys.rows(), h * dh, dh);
    auto vh = slice(values, 0, values.rows(), h * dh, dh);
    auto scores = scale(matmul(qh, transpose(kh)), inv_scale);
    auto attn = softmax_rows(scores);
    head_outs.push_back(matmul(attn, vh));
  }
  if (heads == 1) return head_outs[0];
  TensorT<S> out = head_outs[0];
  for (int h = 1; h < heads; ++h) out = concat_cols(out, head_outs[h]);
  return out;
}

template <class S>
TensorT<S> ffn_forward(const TensorT<S>& x, const TrmParamsT<S>& p) {
  return linear(gelu(linear(x, p.ffn_w1, p.ffn_b1)), p.ffn_w2, p.ffn_b2);
}

template <class S>
TensorT<S> trm_block(const TensorT<S>& q_in, const TensorT<S>& kv,
                     const TrmParamsT<S>& p) {
  if (q_in.rows() < 1 || kv.rows() < 1)
    throw ShapeError("trm: empty input sequence");
  auto q = matmul(q_in, p.w_q);
  auto k = matmul(kv, p.w_k);
  auto v = matmul(kv, p.w_v);
  auto attn = mha_core(q, k, v, p.heads);
  auto x = layer_norm_rows(add(q_in, attn), p.norm1_g, p.norm1_b);
  return layer_norm_rows(add(x, ffn_forward(x, p)), p.norm2_g, p.norm2_b);
}

template <class S>
TensorT<S> trm_forward(const TensorT<S>& seq, const TrmParamsT<S>& p) {
  return trm_block(seq, seq, p);
}

template <class S>
TensorT<S> attention_fusion(const TensorT<S>& seq, const FusionParamsT<S>& p,
                            const std::vector<uint8_t>& valid) {
  if (seq.rows() < 1) throw ShapeError("attention_fusion: empty sequence");
  auto hidden = gelu(linear(seq, p.w5, p.b1));   // S x hidden
  auto logits = linear(hidden, p.w4, p.b2);      // S x 1
  auto row = transpose(logits);                  // 1 x S
  auto weights = valid.empty() ? softmax_rows(row) : softmax_rows_masked(row, valid);
  return matmul(weights, seq);                   // 1 x D
}

#define HLGT_INSTANTIATE_BLOCKS(S)                                                   \
  template struct TrmParamsT<S>;                                                     \
  template struct FusionParamsT<S>;                                                  \
  template struct PositionalEncodingT<S>;                                            \
  template TensorT<S> mha_core<S>(const TensorT<S>&, const TensorT<S>&,              \
                                  const TensorT<S>&, int);                           \
  template TensorT<S> ffn_forward<S>(const TensorT<S>&, const TrmParamsT<S>&);       \
  template TensorT<S> trm_block<S>(const TensorT<S>&, const TensorT<S>&,             \
                                   const TrmParamsT<S>&);                            \
  template TensorT<S> trm_forward<S>(const TensorT<S>&, const TrmParamsT<S>&);       \
  template TensorT<S> attention_fusion<S>(const TensorT<S>&, const FusionParamsT<S>&,\
                                          const std::vector<uint8_t>&);

HLGT_INSTANTIATE_BLOCKS(float)
HLGT_INSTANTIATE_BLOCKS(double)

#undef HLGT_INSTANTIATE_BLOCKS

}  // namespace hlgt
