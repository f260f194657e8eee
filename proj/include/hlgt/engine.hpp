#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hlgt/config.hpp"
#include "hlgt/data.hpp"
#include "hlgt/model.hpp"

namespace hlgt {

// Adam with bias correction over a fixed parameter registry, applied after
// global-norm gradient clipping.
class AdamOptimizer {
 public:
  AdamOptimizer(NamedParams<float> params, const TrainConfig& cfg);

  // Clips the global gradient norm, applies one update, zeroes grads.
  // Returns the pre-clip global norm.
  double step(double lr);

  int64_t steps_taken() const { return t_; }

 private:
  NamedParams<float> params_;
  std::vector<std::vector<float>> m_, v_;
  double beta1_, beta2_, eps_, clip_;
  int64_t t_ = 0;
};

struct EpochStats {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_r1_iou05 = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int64_t best_epoch = -1;
  double best_val = -1.0;
  Model model;  // parameters restored to the best-validation snapshot
};

struct MetricRow {
  int n = 1;
  double m = 0.5;
  double recall = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  int64_t samples = 0;
  double wall_seconds = 0.0;
  double samples_per_sec = 0.0;

  double recall_at(int n, double m) const;
};

// Sorts slot indices by confidence descending, ties by lower index.
std::vector<size_t> rank_by_confidence(const std::vector<ScoredSegment>& slots);

// R@n, IoU=m over the dataset: a hit iff any of the top-n confidence-ranked
// slots has IoU strictly greater than m. Asserts recall monotonicity in n/m.
MetricReport evaluate(const Model& model, const std::vector<LoadedSample>& samples,
                      const std::vector<int>& n_list, const std::vector<double>& m_list);

// Deterministic 80/20-style split by shuffled indices.
void split_train_val(const std::vector<LoadedSample>& all, double val_fraction,
                     uint64_t seed, std::vector<LoadedSample>& train,
                     std::vector<LoadedSample>& val);

using EpochCallback = std::function<void(const EpochStats&)>;

// Full training loop: per-sample forward/backward, batch-mean gradients,
// linear LR decay, early stopping on validation R@1 IoU=0.5. When
// `resume_from` is given its parameter values seed the fresh model (shapes
// already verified by the caller against the config).
TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<LoadedSample>& train_set,
                  const std::vector<LoadedSample>& val_set,
                  const EpochCallback& on_epoch = nullptr,
                  const Model* resume_from = nullptr);

struct Inference {
  double tau_s = 0.0;
  double tau_e = 0.0;
  double confidence = 0.0;
};

// One forward pass; highest-confidence slot rescaled to seconds.
Inference infer(const Model& model, const Tensor& video, const Tensor& query,
                double duration);

// Applies the model-config downsample target to a loaded sample's video.
LoadedSample prepare_sample(const LoadedSample& s, const ModelConfig& cfg);
std::vector<LoadedSample> prepare_dataset(std::vector<LoadedSample> set,
                                          const ModelConfig& cfg);

// Checkpoint: one JSON header line (config echo, epoch, metric, parameter
// table), then each parameter as a feature-file record in table order.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CliConfig& cfg, int64_t epoch, double val_metric);

struct Checkpoint {
  CliConfig cfg;
  int64_t epoch = 0;
  double val_metric = 0.0;
  Model model;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hlgt
