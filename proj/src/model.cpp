#include "hlgt/model.hpp"

namespace hlgt {

template <class S>
ModelT<S> ModelT<S>::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelT<S> m;
  m.cfg = cfg;
  m.visual = ModalityEncoderParamsT<S>::init(cfg.d_model, cfg.heads, rng);
  m.textual = ModalityEncoderParamsT<S>::init(cfg.d_model, cfg.heads, rng);
  m.conv = PhraseConvParamsT<S>::init(cfg.d_model, rng);
  m.decoder = DecoderParamsT<S>::init(cfg.d_model, cfg.heads, cfg.slots, rng);
  m.head = HeadParamsT<S>::init(cfg.d_model, rng);
  // covers raw-token positions for the flat ablation as well as clip counts
  m.pe = PositionalEncodingT<S>::make(cfg.d_model, std::max<int64_t>(cfg.t_max, 256));
  m.visual.collect("visual", m.params);
  m.textual.collect("textual", m.params);
  m.conv.collect("conv", m.params);
  m.decoder.collect("decoder", m.params);
  m.head.collect("head", m.params);
  return m;
}

namespace {

// Local feature extraction shared by the full and local-only paths: split
// into blocks, shared temporal transformer + fusion per block, stack.
template <class S>
TensorT<S> fuse_visual_locals(const ModelT<S>& m, const TensorT<S>& video) {
  auto clips = split_clips(video, m.cfg.clip_len, m.cfg.clip_overlap);
  std::vector<TensorT<S>> locals;
  locals.reserve(clips.clips.size());
  for (size_t i = 0; i < clips.clips.size(); ++i)
    locals.push_back(encode_block(clips.clips[i], m.visual.temporal, m.visual.fusion,
                                  clips.valid[i]));
  return concat_rows(locals);
}

template <class S>
TensorT<S> fuse_textual_locals(const ModelT<S>& m, const TensorT<S>& query) {
  auto phrases = split_phrases(query, m.conv, std::min<int64_t>(m.cfg.phrases, query.rows()));
  std::vector<TensorT<S>> locals;
  locals.reserve(phrases.phrases.size());
  for (auto& block : phrases.phrases)
    locals.push_back(encode_block(block, m.textual.temporal, m.textual.fusion));
  return concat_rows(locals);
}

template <class S>
TensorT<S> encode_tokens(const ModelT<S>& m, const ModalityEncoderParamsT<S>& p,
                         const TensorT<S>& raw, const TensorT<S>& locals) {
  if (m.cfg.arch == Arch::kLocalOnly) {
    auto x = add(locals, m.pe.rows(locals.rows()));
    return trm_forward(x, p.local_trm);
  }
  auto seed = encode_global(raw, p.temporal, p.fusion);
  auto lg = global_local_transform(locals, seed, p.local_trm, p.global_trm, &m.pe);
  return assemble_features(lg, p.proj).tokens;
}

}  // namespace

template <class S>
ForwardOutT<S> ModelT<S>::forward(const TensorT<S>& video, const TensorT<S>& query,
                                  bool parallel_branches) const {
  ForwardOutT<S> out;
  if (cfg.arch == Arch::kFlat) {
    out.visual_tokens = add(video, pe.rows(video.rows()));
    out.textual_tokens = add(query, pe.rows(query.rows()));
  } else {
    auto locals_v = fuse_visual_locals(*this, video);
    auto locals_q = fuse_textual_locals(*this, query);
    out.cmcc = cmcc_loss(locals_v, locals_q,
                         cfg.cmcc_literal_scalar ? CmccMode::kLiteralScalar
                                                 : CmccMode::kDistribution);
    out.visual_tokens = encode_tokens(*this, visual, video, locals_v);
    out.textual_tokens = encode_tokens(*this, textual, query, locals_q);
  }
  auto o_cross =
      decode_cross(out.visual_tokens, out.textual_tokens, decoder, parallel_branches);
  out.slots = predict_boundaries(o_cross, head);
  return out;
}

template <class S>
LossBreakdownT<S> ModelT<S>::loss(const TensorT<S>& video, const TensorT<S>& query,
                                  const GroundTruth& gt, const LossWeights& w,
                                  bool parallel_branches) const {
  auto fwd = forward(video, query, parallel_branches);
  return final_loss(fwd.slots, gt, fwd.cmcc, w);
}

template <class S>
std::vector<ScoredSegment> to_scored(const std::vector<SlotPredictionT<S>>& slots) {
  std::vector<ScoredSegment> out;
  out.reserve(slots.size());
  for (const auto& s : slots)
    out.push_back(ScoredSegment{static_cast<double>(s.start.item()),
                                static_cast<double>(s.end.item()),
                                static_cast<double>(s.conf.item())});
  return out;
}

template <class S>
std::vector<ScoredSegment> ModelT<S>::score_slots(const TensorT<S>& video,
                                                  const TensorT<S>& query) const {
  return to_scored(forward(video, query).slots);
}

template struct ModelT<float>;
template struct ModelT<double>;
template std::vector<ScoredSegment> to_scored<float>(
    const std::vector<SlotPredictionT<float>>&);
template std::vector<ScoredSegment> to_scored<double>(
    const std::vector<SlotPredictionT<double>>&);

}  // namespace hlgt
