#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hlgt/blocks.hpp"
#include "hlgt/ops.hpp"

namespace hlgt {

// Half-open frame/word span in the source sequence.
struct Span {
  int64_t start = 0;
  int64_t end = 0;
};

// Fixed-length clip blocks tiling a frame sequence. A trailing partial clip
// is padded by repeating its last frame; `valid` flags the real rows so the
// fusion softmax can skip padding.
template <class S>
struct ClipSetT {
  std::vector<TensorT<S>> clips;            // each clip_len x D
  std::vector<Span> spans;                  // true coverage, unpadded
  std::vector<std::vector<uint8_t>> valid;  // per clip, length clip_len
  int64_t clip_len = 0;
};

template <class S>
struct PhraseSetT {
  std::vector<TensorT<S>> phrases;  // each K_j x D, K_j >= 1
  std::vector<Span> spans;          // partition of [0, N)
};

// Multi-window 1-D convolution used to lift word features to per-word
// phrase features: windows of size 1..3 looking forward, zero-padded at the
// tail, tanh, then element-wise max across window sizes.
template <class S>
struct PhraseConvParamsT {
  std::vector<std::vector<TensorT<S>>> w;  // w[s][k]: D x D, k < s+1
  std::vector<TensorT<S>> b;               // 1 x D per window size

  static PhraseConvParamsT init(int64_t d, Rng& rng);
  void collect(const std::string& prefix, NamedParams<S>& out);
};

template <class S>
struct LocalGlobalFeaturesT {
  TensorT<S> local_tokens;  // P x D, per-token output of the local transformer
  TensorT<S> o_local;       // 1 x D, mean of local tokens
  TensorT<S> o_global;      // 1 x D, global transformer output
  TensorT<S> global_seed;   // 1 x D, the query that drove the global transformer
};

template <class S>
struct EncodedModalityT {
  TensorT<S> tokens;  // P x D fused per-token features (f^v / f^q)
  TensorT<S> pooled;  // 1 x 2D, concat(o_local, o_global)
};

// One modality's encoder stack. All temporal transformers of a modality
// share `temporal`/`fusion`; the global-local stage has its own two blocks.
template <class S>
struct ModalityEncoderParamsT {
  TrmParamsT<S> temporal;
  FusionParamsT<S> fusion;
  TrmParamsT<S> local_trm;
  TrmParamsT<S> global_trm;
  TensorT<S> proj;  // 2D x D

  static ModalityEncoderParamsT init(int64_t d, int heads, Rng& rng);
  void collect(const std::string& prefix, NamedParams<S>& out);
};

// Clips start at multiples of (clip_len - overlap); generation stops with
// the first clip whose window reaches the sequence end. With overlap 0 the
// count is ceil(T / clip_len).
template <class S>
ClipSetT<S> split_clips(const TensorT<S>& video, int64_t clip_len, int64_t overlap);

// Per-word conv+max phrase features, then a contiguous partition into
// `phrase_count` chunks of near-equal size (larger chunks first).
template <class S>
PhraseSetT<S> split_phrases(const TensorT<S>& query, const PhraseConvParamsT<S>& conv,
                            int64_t phrase_count);

// Temporal transformer + fusion over one block -> one 1xD vector.
template <class S>
TensorT<S> encode_block(const TensorT<S>& block, const TrmParamsT<S>& trm,
                        const FusionParamsT<S>& fusion,
                        const std::vector<uint8_t>& valid = {});

// Same shared blocks applied to the full sequence -> global feature.
template <class S>
TensorT<S> encode_global(const TensorT<S>& seq, const TrmParamsT<S>& trm,
                         const FusionParamsT<S>& fusion);

// Local transformer over the (position-encoded) local vectors, mean-pooled
// O_local, and a global transformer where the global seed cross-attends the
// local tokens.
template <class S>
LocalGlobalFeaturesT<S> global_local_transform(const TensorT<S>& locals,
                                               const TensorT<S>& global_seed,
                                               const TrmParamsT<S>& local_trm,
                                               const TrmParamsT<S>& global_trm,
                                               const PositionalEncodingT<S>* pe);

// Per-token concat(local token, o_global) projected back to D, plus the
// pooled concat(o_local, o_global).
template <class S>
EncodedModalityT<S> assemble_features(const LocalGlobalFeaturesT<S>& lg,
                                      const TensorT<S>& proj);

}  // namespace hlgt
