#pragma once

#include <string>
#include <vector>

#include "hlgt/blocks.hpp"
#include "hlgt/ops.hpp"

namespace hlgt {

// Plain closed interval on the normalized [0,1] axis.
struct Interval {
  double start = 0.0;
  double end = 0.0;
};

struct GroundTruth {
  Interval b;       // normalized (tau_s/duration, tau_e/duration)
  double tau_s = 0.0;
  double tau_e = 0.0;
  double duration = 0.0;
};

struct LossWeights {
  double l1 = 0.8;
  double iou = 0.5;
  double final_balance = 0.2;  // lambda_f
  double neg_conf = 0.1;       // unmatched-slot confidence regularizer
};

// Plain 1-D IoU; two identical zero-length intervals count as IoU 1.
double iou_1d(const Interval& a, const Interval& b);

// IoU minus (enclosure \ union)/enclosure; range (-1, 1].
double giou_1d(const Interval& a, const Interval& b);

// Per-slot boundary head: three GELU-linked linear layers emitting
// (center, width, confidence) logits, squashed by sigmoid.
template <class S>
struct HeadParamsT {
  TensorT<S> w1, b1;  // D x D, 1 x D
  TensorT<S> w2, b2;  // D x D, 1 x D
  TensorT<S> w3, b3;  // D x 3, 1 x 3

  static HeadParamsT init(int64_t d, Rng& rng);
  void collect(const std::string& prefix, NamedParams<S>& out);
};

// One decoder slot's prediction as live tape scalars.
template <class S>
struct SlotPredictionT {
  TensorT<S> start;  // 1x1 in [0,1]
  TensorT<S> end;    // 1x1 in [0,1], start <= end
  TensorT<S> conf;   // 1x1 in [0,1]
};

// (center, width) -> clamped (start, end) with start <= end.
template <class S>
std::pair<TensorT<S>, TensorT<S>> interval_from_center_width(const TensorT<S>& center,
                                                             const TensorT<S>& width);

template <class S>
std::vector<SlotPredictionT<S>> predict_boundaries(const TensorT<S>& o_cross,
                                                   const HeadParamsT<S>& head);

// On-tape GIoU of a predicted (start, end) pair against a fixed interval.
template <class S>
TensorT<S> giou_on_tape(const TensorT<S>& start, const TensorT<S>& end,
                        const Interval& gt);

template <class S>
struct BoundaryLossTermsT {
  TensorT<S> l1;        // |ds| + |de|
  TensorT<S> iou_cost;  // 1 - GIoU
  TensorT<S> conf;      // d-hat
  TensorT<S> total;     // l1*lambda_l1 + iou_cost*lambda_iou - conf
};

template <class S>
BoundaryLossTermsT<S> boundary_loss(const SlotPredictionT<S>& pred,
                                    const GroundTruth& gt, const LossWeights& w);

// argmin of boundary_loss over slots; ties resolve to the lowest index.
template <class S>
int64_t select_slot(const std::vector<BoundaryLossTermsT<S>>& losses);

template <class S>
struct LossBreakdownT {
  TensorT<S> total;  // live tape scalar: cmcc + lambda_f*boundary + neg term
  int64_t selected_slot = 0;
  double cmcc = 0.0;
  double l1_term = 0.0;
  double iou_term = 0.0;
  double conf_term = 0.0;
  double neg_conf_term = 0.0;
  double boundary = 0.0;
  double final_value = 0.0;
};

// Assembles L_final = cmcc + lambda_f * boundary(selected) + lambda_neg *
// sum of unselected confidences. Pass an undefined cmcc tensor to drop the
// cycle term (flat ablation).
template <class S>
LossBreakdownT<S> final_loss(const std::vector<SlotPredictionT<S>>& preds,
                             const GroundTruth& gt, const TensorT<S>& cmcc,
                             const LossWeights& w);

// Highest-confidence slot; ties resolve to the lowest index.
template <class S>
int64_t infer_segment(const std::vector<SlotPredictionT<S>>& preds);

}  // namespace hlgt
