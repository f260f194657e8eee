#include "hlgt/decoder.hpp"

#include <cmath>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>

namespace hlgt {

namespace {

// Persistent single worker so the parallel path does not pay a thread spawn
// per decode. The caller runs the second branch on its own thread.
class BranchWorker {
 public:
  static BranchWorker& instance() {
    static BranchWorker w;
    return w;
  }

  void run(std::function<void()> job) {
    std::unique_lock lk(mu_);
    job_ = std::move(job);
    ready_ = true;
    done_ = false;
    cv_.notify_all();
  }

  void wait() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return done_; });
  }

 private:
  BranchWorker() : thread_([this] { loop(); }) { thread_.detach(); }

  void loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return ready_; });
        job = std::move(job_);
        ready_ = false;
      }
      job();
      {
        std::unique_lock lk(mu_);
        done_ = true;
        cv_.notify_all();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::function<void()> job_;
  bool ready_ = false;
  bool done_ = true;
  std::thread thread_;
};

// Runs the two branch closures, each recording onto a private tape, and
// absorbs both tapes into the caller's tape in a fixed order. The fixed
// merge makes backward accumulation identical no matter which branch
// finishes first.
template <class S>
void run_branches(const std::function<void()>& visual,
                  const std::function<void()>& textual, bool parallel) {
  auto* outer = TapeT<S>::current();
  if (!outer) {
    // inference: nothing to record, just evaluate
    if (parallel) {
      auto& worker = BranchWorker::instance();
      std::exception_ptr err;
      worker.run([&] {
        try {
          visual();
        } catch (...) {
          err = std::current_exception();
        }
      });
      textual();
      worker.wait();
      if (err) std::rethrow_exception(err);
    } else {
      visual();
      textual();
    }
    return;
  }

  TapeT<S> tape_v, tape_q;
  if (parallel) {
    auto& worker = BranchWorker::instance();
    std::exception_ptr err;
    worker.run([&] {
      try {
        auto scope = tape_v.activate();
        visual();
      } catch (...) {
        err = std::current_exception();
      }
    });
    {
      auto scope = tape_q.activate();
      textual();
    }
    worker.wait();
    if (err) std::rethrow_exception(err);
  } else {
    {
      auto scope = tape_v.activate();
      visual();
    }
    {
      auto scope = tape_q.activate();
      textual();
    }
  }
  outer->absorb(std::move(tape_v));
  outer->absorb(std::move(tape_q));
}

}  // namespace

template <class S>
DecoderParamsT<S> DecoderParamsT<S>::init(int64_t d, int heads, int64_t slots, Rng& rng) {
  if (slots < 1) throw ShapeError("decoder: slot count must be positive");
  DecoderParamsT<S> p;
  p.heads = heads;
  p.self_attn = TrmParamsT<S>::init(d, heads, rng);
  p.w6k = init_matrix<S>(d, d, rng);
  p.w6v = init_matrix<S>(d, d, rng);
  p.w7k = init_matrix<S>(d, d, rng);
  p.w7v = init_matrix<S>(d, d, rng);
  p.alpha_v = TensorT<S>::scalar(S(0.5), true);
  p.alpha_q = TensorT<S>::scalar(S(0.5), true);
  p.queries = TensorT<S>(slots, d, S(0), true);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& v : p.queries.values()) v = static_cast<S>(rng.normal(0.0, s));
  return p;
}

template <class S>
void DecoderParamsT<S>::collect(const std::string& prefix, NamedParams<S>& out) {
  self_attn.collect(prefix + ".self_attn", out);
  collect_param(out, w6k, prefix + ".w6k");
  collect_param(out, w6v, prefix + ".w6v");
  collect_param(out, w7k, prefix + ".w7k");
  collect_param(out, w7v, prefix + ".w7v");
  collect_param(out, alpha_v, prefix + ".alpha_v");
  collect_param(out, alpha_q, prefix + ".alpha_q");
  collect_param(out, queries, prefix + ".queries");
}

template <class S>
std::pair<TensorT<S>, TensorT<S>> project_modality_kv(const TensorT<S>& f,
                                                      const TensorT<S>& wk,
                                                      const TensorT<S>& wv) {
  if (f.rows() < 1) throw ShapeError("project_modality_kv: empty modality");
  return {matmul(f, wk), matmul(f, wv)};
}

template <class S>
TensorT<S> enhance_segment_queries(const DecoderParamsT<S>& p) {
  return trm_forward(p.queries, p.self_attn);
}

template <class S>
TensorT<S> parallel_cross_attention(const TensorT<S>& sbar, const TensorT<S>& fv,
                                    const TensorT<S>& fq, const DecoderParamsT<S>& p,
                                    bool parallel) {
  if (fv.rows() < 1 || fq.rows() < 1)
    throw ShapeError("parallel_cross_attention: empty modality");
  TensorT<S> att_v, att_q;
  run_branches<S>(
      [&] {
        auto [kv, vv] = project_modality_kv(fv, p.w6k, p.w6v);
        att_v = mha_core(sbar, kv, vv, p.heads);
      },
      [&] {
        auto [kq, vq] = project_modality_kv(fq, p.w7k, p.w7v);
        att_q = mha_core(sbar, kq, vq, p.heads);
      },
      parallel);
  return add(scale_by(att_v, p.alpha_v), scale_by(att_q, p.alpha_q));
}

template <class S>
TensorT<S> decode_cross(const TensorT<S>& fv, const TensorT<S>& fq,
                        const DecoderParamsT<S>& p, bool parallel) {
  return parallel_cross_attention(enhance_segment_queries(p), fv, fq, p, parallel);
}

namespace {

// 1 x P softmax over negative squared distances from `point` to each row.
template <class S>
TensorT<S> distance_softmax(const TensorT<S>& point, const TensorT<S>& rows) {
  auto diff = sub(rows, repeat_row(point, rows.rows()));
  auto d2 = row_sums(mul(diff, diff));
  return softmax_rows(transpose(neg(d2)));
}

}  // namespace

template <class S>
TensorT<S> soft_nearest_clip(const TensorT<S>& phrase, const TensorT<S>& clips) {
  if (clips.rows() < 1) throw ShapeError("soft_nearest_clip: no clips");
  return matmul(distance_softmax(phrase, clips), clips);
}

template <class S>
CycleAssignmentT<S> soft_phrase_location(const TensorT<S>& clip,
                                         const TensorT<S>& phrases) {
  if (phrases.rows() < 1) throw ShapeError("soft_phrase_location: no phrases");
  CycleAssignmentT<S> out;
  out.distribution = distance_softmax(clip, phrases);
  TensorT<S> indices(phrases.rows(), 1);
  for (int64_t j = 0; j < phrases.rows(); ++j)
    indices.at(j, 0) = static_cast<S>(j + 1);
  out.location = matmul(out.distribution, indices);
  return out;
}

template <class S>
TensorT<S> cmcc_loss(const TensorT<S>& clips, const TensorT<S>& phrases, CmccMode mode) {
  if (clips.rows() < 1 || phrases.rows() < 1)
    throw ShapeError("cmcc_loss: empty clip or phrase set");
  const int64_t j_count = phrases.rows();
  const int64_t d = phrases.cols();
  TensorT<S> total;
  for (int64_t j = 0; j < j_count; ++j) {
    auto h_j = slice(phrases, j, 1, 0, d);
    auto nearest = soft_nearest_clip(h_j, clips);
    auto cycle = soft_phrase_location(nearest, phrases);
    TensorT<S> cosv;
    if (mode == CmccMode::kDistribution) {
      // cos(distribution, one_hot(j)) = w_j / ||w||
      auto w_j = slice(cycle.distribution, 0, 1, j, 1);
      auto norm = sqrt(sum(mul(cycle.distribution, cycle.distribution)));
      cosv = div(w_j, norm);
    } else {
      // cos of the two scalar locations, as written: p*j / (|p|*|j|)
      auto j_scalar = TensorT<S>::scalar(static_cast<S>(j + 1));
      cosv = div(mul(cycle.location, j_scalar),
                 mul(abs(cycle.location), abs(j_scalar)));
    }
    auto term = exp(neg(cosv));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, S(1) / static_cast<S>(j_count));
}

#define HLGT_INSTANTIATE_DECODER(S)                                                     \
  template struct DecoderParamsT<S>;                                                    \
  template std::pair<TensorT<S>, TensorT<S>> project_modality_kv<S>(                    \
      const TensorT<S>&, const TensorT<S>&, const TensorT<S>&);                         \
  template TensorT<S> enhance_segment_queries<S>(const DecoderParamsT<S>&);             \
  template TensorT<S> parallel_cross_attention<S>(const TensorT<S>&, const TensorT<S>&, \
                                                  const TensorT<S>&,                    \
                                                  const DecoderParamsT<S>&, bool);      \
  template TensorT<S> decode_cross<S>(const TensorT<S>&, const TensorT<S>&,             \
                                      const DecoderParamsT<S>&, bool);                  \
  template TensorT<S> soft_nearest_clip<S>(const TensorT<S>&, const TensorT<S>&);       \
  template CycleAssignmentT<S> soft_phrase_location<S>(const TensorT<S>&,               \
                                                       const TensorT<S>&);              \
  template TensorT<S> cmcc_loss<S>(const TensorT<S>&, const TensorT<S>&, CmccMode);

HLGT_INSTANTIATE_DECODER(float)
HLGT_INSTANTIATE_DECODER(double)

#undef HLGT_INSTANTIATE_DECODER

}  // namespace hlgt
