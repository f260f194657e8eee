#include "hlgt/encoder.hpp"

#include <algorithm>

namespace hlgt {

template <class S>
PhraseConvParamsT<S> PhraseConvParamsT<S>::init(int64_t d, Rng& rng) {
  PhraseConvParamsT<S> p;
  for (int64_t s = 1; s <= 3; ++s) {
    std::vector<TensorT<S>> taps;
    for (int64_t k = 0; k < s; ++k) taps.push_back(init_matrix<S>(d, d, rng));
    p.w.push_back(std::move(taps));
    p.b.push_back(TensorT<S>(1, d, S(0), true));
  }
  return p;
}

template <class S>
void PhraseConvParamsT<S>::collect(const std::string& prefix, NamedParams<S>& out) {
  for (size_t s = 0; s < w.size(); ++s) {
    for (size_t k = 0; k < w[s].size(); ++k)
      collect_param(out, w[s][k],
                    prefix + ".win" + std::to_string(s + 1) + ".w" + std::to_string(k));
    collect_param(out, b[s], prefix + ".win" + std::to_string(s + 1) + ".b");
  }
}

template <class S>
ModalityEncoderParamsT<S> ModalityEncoderParamsT<S>::init(int64_t d, int heads, Rng& rng) {
  ModalityEncoderParamsT<S> p;
  p.temporal = TrmParamsT<S>::init(d, heads, rng);
  p.fusion = FusionParamsT<S>::init(d, d, rng);
  p.local_trm = TrmParamsT<S>::init(d, heads, rng);
  p.global_trm = TrmParamsT<S>::init(d, heads, rng);
  // Identity on the local half and zero on the global half, so the fused
  // tokens start out exactly equal to the local tokens and the global
  // pathway fades in through training instead of scrambling them at init.
  p.proj = TensorT<S>(2 * d, d, S(0), true);
  for (int64_t i = 0; i < d; ++i) p.proj.at(i, i) = S(1);
  return p;
}

template <class S>
void ModalityEncoderParamsT<S>::collect(const std::string& prefix, NamedParams<S>& out) {
  temporal.collect(prefix + ".temporal", out);
  fusion.collect(prefix + ".fusion", out);
  local_trm.collect(prefix + ".local_trm", out);
  global_trm.collect(prefix + ".global_trm", out);
  collect_param(out, proj, prefix + ".proj");
}

template <class S>
ClipSetT<S> split_clips(const TensorT<S>& video, int64_t clip_len, int64_t overlap) {
  if (video.rows() < 1) throw ShapeError("split_clips: empty video");
  if (clip_len < 1) throw ShapeError("split_clips: clip length must be positive");
  if (overlap < 0 || overlap >= clip_len)
    throw ShapeError("split_clips: overlap " + std::to_string(overlap) +
                     " must satisfy 0 <= overlap < clip_len=" + std::to_string(clip_len));
  const int64_t t = video.rows(), d = video.cols();
  const int64_t stride = clip_len - overlap;
  ClipSetT<S> set;
  set.clip_len = clip_len;
  for (int64_t s = 0;; s += stride) {
    const int64_t cover_end = std::min(s + clip_len, t);
    const int64_t n_real = cover_end - s;
    TensorT<S> block = slice(video, s, n_real, 0, d);
    if (n_real < clip_len) {
      // repeat the last frame to fill the clip
      TensorT<S> pad = repeat_row(slice(video, cover_end - 1, 1, 0, d), clip_len - n_real);
      block = concat_rows<S>({block, pad});
    }
    std::vector<uint8_t> valid(static_cast<size_t>(clip_len), 0);
    std::fill(valid.begin(), valid.begin() + n_real, 1);
    set.clips.push_back(std::move(block));
    set.spans.push_back(Span{s, cover_end});
    set.valid.push_back(std::move(valid));
    if (s + clip_len >= t) break;
  }
  return set;
}

template <class S>
PhraseSetT<S> split_phrases(const TensorT<S>& query, const PhraseConvParamsT<S>& conv,
                            int64_t phrase_count) {
  const int64_t n = query.rows(), d = query.cols();
  if (n < 1) throw ShapeError("split_phrases: empty query");
  if (phrase_count < 1 || phrase_count > n)
    throw ShapeError("split_phrases: phrase count " + std::to_string(phrase_count) +
                     " must satisfy 1 <= J <= word count " + std::to_string(n));

  // Forward-looking windowed convolutions, zero-padded at the tail.
  TensorT<S> feats;
  for (size_t s = 0; s < conv.w.size(); ++s) {
    TensorT<S> acc;
    for (size_t k = 0; k < conv.w[s].size(); ++k) {
      TensorT<S> shifted;
      if (k == 0) {
        shifted = query;
      } else if (static_cast<int64_t>(k) >= n) {
        shifted = TensorT<S>(n, d);  // window tap entirely past the end
      } else {
        TensorT<S> zeros_tail(static_cast<int64_t>(k), d);
        shifted = concat_rows<S>(
            {slice(query, static_cast<int64_t>(k), n - static_cast<int64_t>(k), 0, d),
             zeros_tail});
      }
      TensorT<S> term = matmul(shifted, conv.w[s][k]);
      acc = (k == 0) ? term : add(acc, term);
    }
    TensorT<S> windowed = tanh(add_row_bias(acc, conv.b[s]));
    feats = (s == 0) ? windowed : maximum(feats, windowed);
  }

  // Contiguous near-equal partition, larger chunks first.
  PhraseSetT<S> set;
  const int64_t base = n / phrase_count;
  const int64_t rem = n % phrase_count;
  int64_t at = 0;
  for (int64_t j = 0; j < phrase_count; ++j) {
    const int64_t len = base + (j < rem ? 1 : 0);
    set.phrases.push_back(slice(feats, at, len, 0, d));
    set.spans.push_back(Span{at, at + len});
    at += len;
  }
  return set;
}

template <class S>
TensorT<S> encode_block(const TensorT<S>& block, const TrmParamsT<S>& trm,
                        const FusionParamsT<S>& fusion,
                        const std::vector<uint8_t>& valid) {
  if (block.rows() < 1) throw ShapeError("encode_block: empty block");
  return attention_fusion(trm_forward(block, trm), fusion, valid);
}

template <class S>
TensorT<S> encode_global(const TensorT<S>& seq, const TrmParamsT<S>& trm,
                         const FusionParamsT<S>& fusion) {
  if (seq.rows() < 1) throw ShapeError("encode_global: empty sequence");
  return attention_fusion(trm_forward(seq, trm), fusion);
}

template <class S>
LocalGlobalFeaturesT<S> global_local_transform(const TensorT<S>& locals,
                                               const TensorT<S>& global_seed,
                                               const TrmParamsT<S>& local_trm,
                                               const TrmParamsT<S>& global_trm,
                                               const PositionalEncodingT<S>* pe) {
  if (locals.rows() < 1) throw ShapeError("global_local_transform: no local tokens");
  TensorT<S> x = locals;
  if (pe) x = add(x, pe->rows(locals.rows()));
  LocalGlobalFeaturesT<S> lg;
  lg.local_tokens = trm_forward(x, local_trm);
  lg.o_local = mean_rows(lg.local_tokens);
  lg.o_global = trm_block(global_seed, lg.local_tokens, global_trm);
  lg.global_seed = global_seed;
  return lg;
}

template <class S>
EncodedModalityT<S> assemble_features(const LocalGlobalFeaturesT<S>& lg,
                                      const TensorT<S>& proj) {
  EncodedModalityT<S> out;
  TensorT<S> wide =
      concat_cols(lg.local_tokens, repeat_row(lg.o_global, lg.local_tokens.rows()));
  out.tokens = matmul(wide, proj);
  out.pooled = concat_cols(lg.o_local, lg.o_global);
  return out;
}

#define HLGT_INSTANTIATE_ENCODER(S)                                                    \
  template struct PhraseConvParamsT<S>;                                                \
  template struct ModalityEncoderParamsT<S>;                                           \
  template ClipSetT<S> split_clips<S>(const TensorT<S>&, int64_t, int64_t);            \
  template PhraseSetT<S> split_phrases<S>(const TensorT<S>&,                           \
                                          const PhraseConvParamsT<S>&, int64_t);       \
  template TensorT<S> encode_block<S>(const TensorT<S>&, const TrmParamsT<S>&,         \
                                      const FusionParamsT<S>&,                         \
                                      const std::vector<uint8_t>&);                    \
  template TensorT<S> encode_global<S>(const TensorT<S>&, const TrmParamsT<S>&,        \
                                       const FusionParamsT<S>&);                       \
  template LocalGlobalFeaturesT<S> global_local_transform<S>(                          \
      const TensorT<S>&, const TensorT<S>&, const TrmParamsT<S>&,                      \
      const TrmParamsT<S>&, const PositionalEncodingT<S>*);                            \
  template EncodedModalityT<S> assemble_features<S>(const LocalGlobalFeaturesT<S>&,    \
                                                    const TensorT<S>&);

HLGT_INSTANTIATE_ENCODER(float)
HLGT_INSTANTIATE_ENCODER(double)

#undef HLGT_INSTANTIATE_ENCODER

}  // namespace hlgt
