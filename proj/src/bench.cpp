#include "hlgt/bench.hpp"

#include <chrono>

#include "hlgt/engine.hpp"

namespace hlgt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Repeats fn until ~budget seconds elapse; returns iterations per second.
template <class Fn>
double measure_rate(Fn&& fn, double budget_seconds, int min_iters) {
  // warmup
  fn();
  int iters = 0;
  const auto t0 = Clock::now();
  double elapsed = 0.0;
  while (iters < min_iters || elapsed < budget_seconds) {
    fn();
    ++iters;
    elapsed = seconds_since(t0);
  }
  return static_cast<double>(iters) / elapsed;
}

}  // namespace

BenchReport run_bench(const CliConfig& cfg) {
  SynthConfig sc = cfg.synth;
  sc.samples = 1;
  const auto samples = synth_generate(sc);
  const auto& s = samples[0];
  const Tensor video = downsample_uniform(s.video, cfg.model.t_max);
  const Tensor& query = s.query;

  Model model = Model::init(cfg.model, cfg.train.seed);
  GroundTruth gt;
  gt.b = Interval{s.tau_s / s.duration, s.tau_e / s.duration};
  gt.tau_s = s.tau_s;
  gt.tau_e = s.tau_e;
  gt.duration = s.duration;

  BenchReport report;
  report.forward_samples_per_sec =
      measure_rate([&] { model.forward(video, query); }, 1.0, 5);

  AdamOptimizer opt(model.params, cfg.train);
  report.train_step_samples_per_sec = measure_rate(
      [&] {
        Tape tape;
        auto scope = tape.activate();
        auto breakdown = model.loss(video, query, gt, cfg.train.weights);
        tape.backward(breakdown.total);
        opt.step(cfg.train.learning_rate);
      },
      1.0, 5);

  // Decoder-stage A/B. Inputs are precomputed so only the branch execution
  // strategy differs between the two modes. Repetitions interleave and the
  // best rate per mode is kept, which cancels slow drift on shared hardware.
  const auto fwd = model.forward(video, query);
  const Tensor fv = fwd.visual_tokens;
  const Tensor fq = fwd.textual_tokens;
  double best_seq = 0.0, best_par = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    best_seq = std::max(best_seq, measure_rate(
                                      [&] { decode_cross(fv, fq, model.decoder, false); },
                                      0.4, 10));
    best_par = std::max(best_par, measure_rate(
                                      [&] { decode_cross(fv, fq, model.decoder, true); },
                                      0.4, 10));
  }
  report.decoder_sequential_per_sec = best_seq;
  report.decoder_parallel_per_sec = best_par;
  return report;
}

}  // namespace hlgt
