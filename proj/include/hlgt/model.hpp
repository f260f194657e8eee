#pragma once

#include <vector>

#include "hlgt/config.hpp"
#include "hlgt/decoder.hpp"
#include "hlgt/encoder.hpp"
#include "hlgt/grounding.hpp"

namespace hlgt {

template <class S>
struct ForwardOutT {
  std::vector<SlotPredictionT<S>> slots;
  TensorT<S> cmcc;          // undefined for the flat ablation
  TensorT<S> visual_tokens; // what fed the decoder's visual branch
  TensorT<S> textual_tokens;
};

// Plain-number view of one slot, for metrics and inference.
struct ScoredSegment {
  double start = 0.0;
  double end = 0.0;
  double conf = 0.0;
};

template <class S>
struct ModelT {
  ModelConfig cfg;
  ModalityEncoderParamsT<S> visual;
  ModalityEncoderParamsT<S> textual;
  PhraseConvParamsT<S> conv;
  DecoderParamsT<S> decoder;
  HeadParamsT<S> head;
  PositionalEncodingT<S> pe;
  NamedParams<S> params;

  static ModelT init(const ModelConfig& cfg, uint64_t seed);

  // One sample end to end: hierarchy encoders (per arch), decoder, slots.
  ForwardOutT<S> forward(const TensorT<S>& video, const TensorT<S>& query,
                         bool parallel_branches = false) const;

  // forward + final loss for a normalized ground truth.
  LossBreakdownT<S> loss(const TensorT<S>& video, const TensorT<S>& query,
                         const GroundTruth& gt, const LossWeights& w,
                         bool parallel_branches = false) const;

  std::vector<ScoredSegment> score_slots(const TensorT<S>& video,
                                         const TensorT<S>& query) const;
};

using Model = ModelT<float>;
using ModelDouble = ModelT<double>;

template <class S>
std::vector<ScoredSegment> to_scored(const std::vector<SlotPredictionT<S>>& slots);

}  // namespace hlgt
