#pragma once

#include <string>
#include <vector>

#include "hlgt/blocks.hpp"
#include "hlgt/ops.hpp"

namespace hlgt {

enum class CmccMode {
  kDistribution,   // cosine between the soft assignment and one_hot(j)
  kLiteralScalar,  // cosine of the two scalar indices, as written
};

template <class S>
struct DecoderParamsT {
  TrmParamsT<S> self_attn;        // segment-query enhancement
  TensorT<S> w6k, w6v;            // video key/value projections, D x D
  TensorT<S> w7k, w7v;            // query key/value projections, D x D
  TensorT<S> alpha_v, alpha_q;    // branch fusion scalars, init 0.5
  TensorT<S> queries;             // M x D learnable segment queries
  int heads = 1;

  static DecoderParamsT init(int64_t d, int heads, int64_t slots, Rng& rng);
  void collect(const std::string& prefix, NamedParams<S>& out);
};

template <class S>
struct CycleAssignmentT {
  TensorT<S> location;      // 1x1 soft phrase index p, 1-based
  TensorT<S> distribution;  // 1xJ non-negative weights summing to 1
};

// keys = f W^k, values = f W^v.
template <class S>
std::pair<TensorT<S>, TensorT<S>> project_modality_kv(const TensorT<S>& f,
                                                      const TensorT<S>& wk,
                                                      const TensorT<S>& wv);

template <class S>
TensorT<S> enhance_segment_queries(const DecoderParamsT<S>& p);

// The two cross-attention branches combined as alpha_v*Att_v + alpha_q*Att_q.
// With `parallel` the branches run on separate threads; their tapes are
// merged visual-then-textual, so results are identical either way.
template <class S>
TensorT<S> parallel_cross_attention(const TensorT<S>& sbar, const TensorT<S>& fv,
                                    const TensorT<S>& fq, const DecoderParamsT<S>& p,
                                    bool parallel);

// Full decoder stage: enhance queries, project both modalities, fuse.
template <class S>
TensorT<S> decode_cross(const TensorT<S>& fv, const TensorT<S>& fq,
                        const DecoderParamsT<S>& p, bool parallel);

// Distance-softmax weighted combination of clip vectors (Eq. soft nearest
// neighbor): softmax over negative squared Euclidean distances.
template <class S>
TensorT<S> soft_nearest_clip(const TensorT<S>& phrase, const TensorT<S>& clips);

// Soft location of a clip within the phrase sequence; expectation of the
// 1-based phrase index under the distance softmax.
template <class S>
CycleAssignmentT<S> soft_phrase_location(const TensorT<S>& clip,
                                         const TensorT<S>& phrases);

// Mean over phrases of exp(-cos(cycle assignment, one_hot(j))). Each phrase
// cycles phrase -> soft nearest clip -> soft phrase distribution.
template <class S>
TensorT<S> cmcc_loss(const TensorT<S>& clips, const TensorT<S>& phrases,
                     CmccMode mode = CmccMode::kDistribution);

}  // namespace hlgt
