#pragma once

#include "hlgt/config.hpp"
#include "hlgt/model.hpp"

namespace hlgt {

struct BenchReport {
  double forward_samples_per_sec = 0.0;
  double train_step_samples_per_sec = 0.0;
  double decoder_sequential_per_sec = 0.0;
  double decoder_parallel_per_sec = 0.0;
};

// Measures forward-only and train-step throughput on one synthetic sample,
// plus an A/B of the decoder stage with sequential vs concurrent branches.
// The A/B interleaves repetitions and keeps the best rate per mode.
BenchReport run_bench(const CliConfig& cfg);

}  // namespace hlgt
