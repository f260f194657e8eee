#include "hlgt/engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace hlgt {

using nlohmann::json;

AdamOptimizer::AdamOptimizer(NamedParams<float> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      clip_(cfg.grad_clip_norm) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

double AdamOptimizer::step(double lr) {
  double sq_norm = 0.0;
  for (auto& p : params_) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) {
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in parameter '" + p.name() + "'");
      sq_norm += static_cast<double>(g) * g;
    }
  }
  const double norm = std::sqrt(sq_norm);
  const double scale = norm > clip_ ? clip_ / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto& p = params_[pi];
    if (!p.has_grad()) continue;
    auto& vals = p.values();
    auto& grads = p.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < vals.size(); ++i) {
      const double g = static_cast<double>(grads[i]) * scale;
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
      v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      vals[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
    p.zero_grad();
  }
  return norm;
}

double MetricReport::recall_at(int n, double m) const {
  for (const auto& r : rows)
    if (r.n == n && r.m == m) return r.recall;
  throw std::out_of_range("metric report has no row for n=" + std::to_string(n) +
                          " m=" + std::to_string(m));
}

std::vector<size_t> rank_by_confidence(const std::vector<ScoredSegment>& slots) {
  std::vector<size_t> order(slots.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return slots[a].conf > slots[b].conf;
  });
  return order;
}

MetricReport evaluate(const Model& model, const std::vector<LoadedSample>& samples,
                      const std::vector<int>& n_list, const std::vector<double>& m_list) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::vector<int64_t>> hits(n_list.size(),
                                         std::vector<int64_t>(m_list.size(), 0));
  for (const auto& s : samples) {
    const auto slots = model.score_slots(s.video, s.query);
    const auto order = rank_by_confidence(slots);
    const Interval gt{s.gt_start, s.gt_end};
    for (size_t ni = 0; ni < n_list.size(); ++ni) {
      const size_t top = std::min(static_cast<size_t>(n_list[ni]), order.size());
      for (size_t mi = 0; mi < m_list.size(); ++mi) {
        bool hit = false;
        for (size_t k = 0; k < top && !hit; ++k) {
          const auto& p = slots[order[k]];
          hit = iou_1d(Interval{p.start, p.end}, gt) > m_list[mi];
        }
        if (hit) ++hits[ni][mi];
      }
    }
  }
  MetricReport report;
  report.samples = static_cast<int64_t>(samples.size());
  for (size_t ni = 0; ni < n_list.size(); ++ni)
    for (size_t mi = 0; mi < m_list.size(); ++mi)
      report.rows.push_back(MetricRow{
          n_list[ni], m_list[mi],
          static_cast<double>(hits[ni][mi]) / static_cast<double>(samples.size())});
  const auto end = std::chrono::steady_clock::now();
  report.wall_seconds = std::chrono::duration<double>(end - start).count();
  report.samples_per_sec =
      report.wall_seconds > 0 ? static_cast<double>(samples.size()) / report.wall_seconds
                              : 0.0;

  // Monotonicity: recall can only grow with n and shrink as m tightens.
  for (const auto& a : report.rows)
    for (const auto& b : report.rows) {
      if (a.m == b.m && a.n <= b.n && a.recall > b.recall + 1e-12)
        throw NumericError("evaluate: recall not monotone in n");
      if (a.n == b.n && a.m <= b.m && a.recall < b.recall - 1e-12)
        throw NumericError("evaluate: recall not monotone in m");
    }
  return report;
}

void split_train_val(const std::vector<LoadedSample>& all, double val_fraction,
                     uint64_t seed, std::vector<LoadedSample>& train,
                     std::vector<LoadedSample>& val) {
  std::vector<size_t> order(all.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng splitter(seed * 0x9e3779b97f4a7c15ull + 17);
  splitter.shuffle(order.begin(), order.end());
  const size_t n_val = std::max<size_t>(1, static_cast<size_t>(
                                               std::llround(val_fraction *
                                                            static_cast<double>(all.size()))));
  train.clear();
  val.clear();
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < all.size() - n_val)
      train.push_back(all[order[i]]);
    else
      val.push_back(all[order[i]]);
  }
}

LoadedSample prepare_sample(const LoadedSample& s, const ModelConfig& cfg) {
  LoadedSample out = s;
  out.video = downsample_uniform(s.video, cfg.t_max);
  return out;
}

std::vector<LoadedSample> prepare_dataset(std::vector<LoadedSample> set,
                                          const ModelConfig& cfg) {
  for (auto& s : set) s = prepare_sample(s, cfg);
  return set;
}

TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<LoadedSample>& train_set,
                  const std::vector<LoadedSample>& val_set,
                  const EpochCallback& on_epoch, const Model* resume_from) {
  mcfg.validate();
  tcfg.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty train or validation set");

  const auto train_prepped = prepare_dataset(train_set, mcfg);
  const auto val_prepped = prepare_dataset(val_set, mcfg);

  TrainResult result;
  result.model = Model::init(mcfg, tcfg.seed);
  if (resume_from) {
    if (resume_from->params.size() != result.model.params.size())
      throw ShapeError("train: resume parameter count mismatch");
    for (size_t i = 0; i < result.model.params.size(); ++i) {
      auto& dst = result.model.params[i];
      const auto& src = resume_from->params[i];
      if (src.rows() != dst.rows() || src.cols() != dst.cols())
        throw ShapeError("train: resume shape mismatch at '" + dst.name() + "'");
      dst.values() = src.values();
    }
  }
  AdamOptimizer opt(result.model.params, tcfg);

  std::vector<std::vector<float>> best_params;
  Rng shuffle_rng(tcfg.seed + 0x517cc1b727220a95ull);
  int64_t epochs_since_best = 0;

  for (int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = tcfg.learning_rate *
                      (1.0 - static_cast<double>(epoch) / static_cast<double>(tcfg.epochs));
    Rng epoch_rng = shuffle_rng.fork(static_cast<uint64_t>(epoch) + 1);
    const auto batches = make_batches(train_prepped.size(),
                                      static_cast<size_t>(tcfg.batch_size), epoch_rng);
    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const float inv_batch = 1.0f / static_cast<float>(batch.size());
      for (size_t idx : batch) {
        const auto& s = train_prepped[idx];
        GroundTruth gt;
        gt.b = Interval{s.gt_start, s.gt_end};
        gt.tau_s = s.tau_s;
        gt.tau_e = s.tau_e;
        gt.duration = s.duration;
        try {
          Tape tape;
          auto scope = tape.activate();
          auto breakdown = result.model.loss(s.video, s.query, gt, tcfg.weights,
                                             tcfg.parallel_branches);
          auto scaled = scale(breakdown.total, inv_batch);
          tape.backward(scaled);
          loss_sum += breakdown.final_value;
          ++loss_count;
        } catch (const NumericError& e) {
          throw NumericError("train: step aborted at epoch " + std::to_string(epoch) +
                             " batch " + std::to_string(bi) + " sample '" + s.id +
                             "': " + e.what());
        }
      }
      opt.step(lr);
    }

    const auto val_report = evaluate(result.model, val_prepped, {1}, {0.5});
    const double val_r1 = val_report.recall_at(1, 0.5);
    const auto t1 = std::chrono::steady_clock::now();

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(std::max<int64_t>(1, loss_count));
    stats.val_r1_iou05 = val_r1;
    stats.lr = lr;
    stats.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (val_r1 > result.best_val) {
      result.best_val = val_r1;
      result.best_epoch = epoch;
      best_params.clear();
      for (const auto& p : result.model.params) best_params.push_back(p.values());
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= tcfg.early_stop_patience) break;
    }
  }

  // restore the best-validation snapshot
  if (!best_params.empty())
    for (size_t i = 0; i < result.model.params.size(); ++i)
      result.model.params[i].values() = best_params[i];
  return result;
}

Inference infer(const Model& model, const Tensor& video, const Tensor& query,
                double duration) {
  if (duration <= 0) throw std::invalid_argument("infer: duration must be positive");
  if (video.cols() != model.cfg.d_model || query.cols() != model.cfg.d_model)
    throw ShapeError("infer: feature dim " + std::to_string(video.cols()) + "/" +
                     std::to_string(query.cols()) + " does not match checkpoint d_model " +
                     std::to_string(model.cfg.d_model));
  const Tensor v = downsample_uniform(video, model.cfg.t_max);
  auto fwd = model.forward(v, query);
  const int64_t best = infer_segment(fwd.slots);
  const auto& slot = fwd.slots[static_cast<size_t>(best)];
  Inference out;
  out.tau_s = static_cast<double>(slot.start.item()) * duration;
  out.tau_e = static_cast<double>(slot.end.item()) * duration;
  out.confidence = static_cast<double>(slot.conf.item());
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CliConfig& cfg, int64_t epoch, double val_metric) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("save_checkpoint: cannot open " + path.string());
  json params = json::array();
  for (const auto& p : model.params)
    params.push_back(json{{"name", p.name()}, {"rows", p.rows()}, {"cols", p.cols()}});
  json header{{"format", "hlgt-checkpoint"},
              {"version", 1},
              {"config", json::parse(config_to_json(cfg))},
              {"epoch", epoch},
              {"val_r1_iou05", val_metric},
              {"params", params}};
  os << header.dump() << "\n";
  for (const auto& p : model.params) write_features_stream(p, os);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_checkpoint: cannot open " + path.string());
  std::string header_line;
  if (!std::getline(is, header_line))
    throw FormatError("load_checkpoint: missing header line");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_checkpoint: bad header: ") + e.what());
  }
  if (header.value("format", "") != "hlgt-checkpoint")
    throw BadMagicError("load_checkpoint: not a checkpoint file");
  if (header.value("version", 0) != 1)
    throw VersionMismatchError("load_checkpoint: unsupported version");

  Checkpoint ck;
  ck.cfg = parse_config_json(header.at("config").dump());
  ck.epoch = header.value("epoch", int64_t{0});
  ck.val_metric = header.value("val_r1_iou05", 0.0);
  ck.model = Model::init(ck.cfg.model, ck.cfg.train.seed);

  const auto& table = header.at("params");
  if (table.size() != ck.model.params.size())
    throw FormatError("load_checkpoint: parameter count mismatch, file has " +
                      std::to_string(table.size()) + ", model expects " +
                      std::to_string(ck.model.params.size()));
  for (size_t i = 0; i < ck.model.params.size(); ++i) {
    auto& p = ck.model.params[i];
    const auto& meta = table[i];
    if (meta.at("name").get<std::string>() != p.name())
      throw FormatError("load_checkpoint: parameter order mismatch at '" + p.name() + "'");
    Tensor stored = read_features_stream(is, "checkpoint:" + p.name());
    if (stored.rows() != p.rows() || stored.cols() != p.cols())
      throw ShapeError("load_checkpoint: '" + p.name() + "' has shape " +
                       std::to_string(stored.rows()) + "x" + std::to_string(stored.cols()) +
                       ", model expects " + std::to_string(p.rows()) + "x" +
                       std::to_string(p.cols()));
    p.values() = stored.values();
  }
  return ck;
}

}  // namespace hlgt
