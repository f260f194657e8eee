#include "hlgt/grounding.hpp"

#include <algorithm>
#include <cmath>

namespace hlgt {

namespace {

void require_interval(const Interval& v, const char* op) {
  if (v.start > v.end)
    throw ShapeError(std::string(op) + ": inverted interval (" +
                     std::to_string(v.start) + ", " + std::to_string(v.end) + ")");
}

}  // namespace

double iou_1d(const Interval& a, const Interval& b) {
  require_interval(a, "iou_1d");
  require_interval(b, "iou_1d");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  if (uni <= 0.0)
    return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  return inter / uni;
}

double giou_1d(const Interval& a, const Interval& b) {
  require_interval(a, "giou_1d");
  require_interval(b, "giou_1d");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  const double enclose = std::max(a.end, b.end) - std::min(a.start, b.start);
  if (enclose <= 0.0)
    return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  const double iou = uni > 0.0 ? inter / uni : (a.start == b.start && a.end == b.end ? 1.0 : 0.0);
  return iou - (enclose - uni) / enclose;
}

template <class S>
HeadParamsT<S> HeadParamsT<S>::init(int64_t d, Rng& rng) {
  HeadParamsT<S> p;
  p.w1 = init_matrix<S>(d, d, rng);
  p.b1 = TensorT<S>(1, d, S(0), true);
  p.w2 = init_matrix<S>(d, d, rng);
  p.b2 = TensorT<S>(1, d, S(0), true);
  // Output layer starts at zero so every slot emits the same neutral
  // (center, width, confidence) at step 0. The lowest-index tie rule then
  // elects a single slot deterministically and the head learns to rank
  // that slot's readout, instead of several slots racing to saturation.
  p.w3 = TensorT<S>(d, 3, S(0), true);
  p.b3 = TensorT<S>(1, 3, S(0), true);
  return p;
}

template <class S>
void HeadParamsT<S>::collect(const std::string& prefix, NamedParams<S>& out) {
  collect_param(out, w1, prefix + ".w1");
  collect_param(out, b1, prefix + ".b1");
  collect_param(out, w2, prefix + ".w2");
  collect_param(out, b2, prefix + ".b2");
  collect_param(out, w3, prefix + ".w3");
  collect_param(out, b3, prefix + ".b3");
}

template <class S>
std::pair<TensorT<S>, TensorT<S>> interval_from_center_width(const TensorT<S>& center,
                                                             const TensorT<S>& width) {
  auto half = scale(width, S(0.5));
  auto start = clamp01(sub(center, half));
  auto end = clamp01(add(center, half));
  return {start, end};
}

template <class S>
std::vector<SlotPredictionT<S>> predict_boundaries(const TensorT<S>& o_cross,
                                                   const HeadParamsT<S>& head) {
  if (o_cross.rows() < 1) throw ShapeError("predict_boundaries: no slots");
  auto h = gelu(linear(o_cross, head.w1, head.b1));
  h = gelu(linear(h, head.w2, head.b2));
  auto raw = linear(h, head.w3, head.b3);  // M x 3 logits
  auto squashed = sigmoid(raw);
  std::vector<SlotPredictionT<S>> preds;
  preds.reserve(static_cast<size_t>(o_cross.rows()));
  for (int64_t m = 0; m < o_cross.rows(); ++m) {
    auto center = slice(squashed, m, 1, 0, 1);
    auto width = slice(squashed, m, 1, 1, 1);
    auto conf = slice(squashed, m, 1, 2, 1);
    auto [start, end] = interval_from_center_width(center, width);
    preds.push_back(SlotPredictionT<S>{start, end, conf});
  }
  return preds;
}

template <class S>
TensorT<S> giou_on_tape(const TensorT<S>& start, const TensorT<S>& end,
                        const Interval& gt) {
  require_interval(gt, "giou_on_tape");
  auto gs = TensorT<S>::scalar(static_cast<S>(gt.start));
  auto ge = TensorT<S>::scalar(static_cast<S>(gt.end));
  auto zero = TensorT<S>::scalar(S(0));
  auto inter = maximum(sub(minimum(end, ge), maximum(start, gs)), zero);
  auto len_sum = add_scalar(sub(end, start), static_cast<S>(gt.end - gt.start));
  auto uni = sub(len_sum, inter);
  auto enclose = sub(maximum(end, ge), minimum(start, gs));
  return sub(div(inter, uni), div(sub(enclose, uni), enclose));
}

template <class S>
BoundaryLossTermsT<S> boundary_loss(const SlotPredictionT<S>& pred,
                                    const GroundTruth& gt, const LossWeights& w) {
  BoundaryLossTermsT<S> terms;
  auto ds = abs(add_scalar(pred.start, static_cast<S>(-gt.b.start)));
  auto de = abs(add_scalar(pred.end, static_cast<S>(-gt.b.end)));
  terms.l1 = add(ds, de);
  terms.iou_cost = add_scalar(neg(giou_on_tape(pred.start, pred.end, gt.b)), S(1));
  terms.conf = pred.conf;
  terms.total = sub(add(scale(terms.l1, static_cast<S>(w.l1)),
                        scale(terms.iou_cost, static_cast<S>(w.iou))),
                    terms.conf);
  return terms;
}

template <class S>
int64_t select_slot(const std::vector<BoundaryLossTermsT<S>>& losses) {
  if (losses.empty()) throw ShapeError("select_slot: no predictions");
  int64_t best = 0;
  S best_val = losses[0].total.item();
  for (size_t h = 1; h < losses.size(); ++h) {
    const S v = losses[h].total.item();
    if (v < best_val) {
      best_val = v;
      best = static_cast<int64_t>(h);
    }
  }
  return best;
}

template <class S>
LossBreakdownT<S> final_loss(const std::vector<SlotPredictionT<S>>& preds,
                             const GroundTruth& gt, const TensorT<S>& cmcc,
                             const LossWeights& w) {
  if (preds.empty()) throw ShapeError("final_loss: no predictions");
  std::vector<BoundaryLossTermsT<S>> losses;
  losses.reserve(preds.size());
  for (const auto& p : preds) losses.push_back(boundary_loss(p, gt, w));
  const int64_t mu = select_slot(losses);

  LossBreakdownT<S> out;
  out.selected_slot = mu;
  const auto& sel = losses[static_cast<size_t>(mu)];
  out.l1_term = static_cast<double>(sel.l1.item());
  out.iou_term = static_cast<double>(sel.iou_cost.item());
  out.conf_term = static_cast<double>(sel.conf.item());
  out.boundary = static_cast<double>(sel.total.item());

  TensorT<S> total = scale(sel.total, static_cast<S>(w.final_balance));
  if (cmcc.defined()) {
    out.cmcc = static_cast<double>(cmcc.item());
    total = add(cmcc, total);
  }
  if (w.neg_conf > 0.0 && preds.size() > 1) {
    TensorT<S> neg_sum;
    for (size_t h = 0; h < preds.size(); ++h) {
      if (static_cast<int64_t>(h) == mu) continue;
      neg_sum = neg_sum.defined() ? add(neg_sum, preds[h].conf) : preds[h].conf;
    }
    out.neg_conf_term = static_cast<double>(neg_sum.item());
    total = add(total, scale(neg_sum, static_cast<S>(w.neg_conf)));
  }
  out.total = total;
  out.final_value = static_cast<double>(total.item());
  return out;
}

template <class S>
int64_t infer_segment(const std::vector<SlotPredictionT<S>>& preds) {
  if (preds.empty()) throw ShapeError("infer_segment: no predictions");
  int64_t best = 0;
  S best_conf = preds[0].conf.item();
  for (size_t h = 1; h < preds.size(); ++h) {
    const S c = preds[h].conf.item();
    if (c > best_conf) {
      best_conf = c;
      best = static_cast<int64_t>(h);
    }
  }
  return best;
}

#define HLGT_INSTANTIATE_GROUNDING(S)                                                   \
  template struct HeadParamsT<S>;                                                       \
  template std::pair<TensorT<S>, TensorT<S>> interval_from_center_width<S>(             \
      const TensorT<S>&, const TensorT<S>&);                                            \
  template std::vector<SlotPredictionT<S>> predict_boundaries<S>(                       \
      const TensorT<S>&, const HeadParamsT<S>&);                                        \
  template TensorT<S> giou_on_tape<S>(const TensorT<S>&, const TensorT<S>&,             \
                                      const Interval&);                                 \
  template BoundaryLossTermsT<S> boundary_loss<S>(const SlotPredictionT<S>&,            \
                                                  const GroundTruth&,                   \
                                                  const LossWeights&);                  \
  template int64_t select_slot<S>(const std::vector<BoundaryLossTermsT<S>>&);           \
  template LossBreakdownT<S> final_loss<S>(const std::vector<SlotPredictionT<S>>&,      \
                                           const GroundTruth&, const TensorT<S>&,       \
                                           const LossWeights&);                         \
  template int64_t infer_segment<S>(const std::vector<SlotPredictionT<S>>&);

HLGT_INSTANTIATE_GROUNDING(float)
HLGT_INSTANTIATE_GROUNDING(double)

#undef HLGT_INSTANTIATE_GROUNDING

}  // namespace hlgt
