#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hlgt/bench.hpp"
#include "hlgt/config.hpp"
#include "hlgt/engine.hpp"
#include "hlgt/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

struct ConfigArgs {
  std::string config_path;
  std::string preset;
  int64_t seed = -1;  // <0 keeps the config's seed
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--preset", args.preset,
                  "preset name: toy, paper-anet, paper-charades, paper-tacos");
  cmd->add_option("--seed", args.seed, "override the config seed");
}

hlgt::CliConfig resolve_config(const ConfigArgs& args) {
  hlgt::CliConfig cfg;
  if (!args.config_path.empty())
    cfg = hlgt::load_config_file(args.config_path);
  else if (!args.preset.empty())
    cfg = hlgt::make_preset(args.preset);
  else
    cfg = hlgt::make_preset("toy");
  if (args.seed >= 0) {
    cfg.train.seed = static_cast<uint64_t>(args.seed);
    cfg.synth.seed = static_cast<uint64_t>(args.seed);
  }
  return cfg;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  size_t at = 0;
  while (at < csv.size()) {
    const size_t comma = csv.find(',', at);
    out.push_back(std::stoi(csv.substr(at, comma - at)));
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  size_t at = 0;
  while (at < csv.size()) {
    const size_t comma = csv.find(',', at);
    out.push_back(std::stod(csv.substr(at, comma - at)));
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return out;
}

hlgt::GroundTruth make_gt(const hlgt::LoadedSample& s) {
  hlgt::GroundTruth gt;
  gt.b = hlgt::Interval{s.gt_start, s.gt_end};
  gt.tau_s = s.tau_s;
  gt.tau_e = s.tau_e;
  gt.duration = s.duration;
  return gt;
}

int cmd_synth(const ConfigArgs& cargs, const std::string& out_dir) {
  const auto cfg = resolve_config(cargs);
  const auto samples = hlgt::synth_generate(cfg.synth);
  hlgt::write_dataset(samples, out_dir);
  std::ofstream echo(fs::path(out_dir) / "config.json");
  echo << hlgt::config_to_json(cfg) << "\n";
  std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
  return kOk;
}

int cmd_train(const ConfigArgs& cargs, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume, bool quiet) {
  const auto cfg = resolve_config(cargs);
  const auto all = hlgt::load_dataset(fs::path(data_dir) / "manifest.jsonl");
  std::vector<hlgt::LoadedSample> train_set, val_set;
  hlgt::split_train_val(all, cfg.train.val_fraction, cfg.train.seed, train_set, val_set);

  fs::create_directories(out_dir);
  std::ofstream history(fs::path(out_dir) / "history.jsonl");

  const hlgt::Model* resume_from = nullptr;
  hlgt::Checkpoint resumed;
  if (!resume.empty()) {
    resumed = hlgt::load_checkpoint(resume);
    const auto& rc = resumed.cfg.model;
    const auto& mc = cfg.model;
    if (rc.d_model != mc.d_model || rc.heads != mc.heads || rc.slots != mc.slots ||
        rc.clip_len != mc.clip_len || rc.phrases != mc.phrases || rc.t_max != mc.t_max ||
        rc.arch != mc.arch)
      throw hlgt::ConfigError("resume checkpoint dims do not match the requested config");
    resume_from = &resumed.model;
  }

  auto on_epoch = [&](const hlgt::EpochStats& e) {
    json j{{"epoch", e.epoch},
           {"train_loss", e.train_loss},
           {"val_r1_iou05", e.val_r1_iou05},
           {"lr", e.lr},
           {"seconds", e.seconds}};
    history << j.dump() << "\n";
    history.flush();
    if (!quiet)
      std::cout << "epoch " << e.epoch << "  loss " << e.train_loss << "  val R@1,IoU=0.5 "
                << e.val_r1_iou05 << "\n";
  };

  auto result =
      hlgt::train(cfg.model, cfg.train, train_set, val_set, on_epoch, resume_from);

  const auto ckpt_path = fs::path(out_dir) / "checkpoint.hlgt";
  hlgt::save_checkpoint(ckpt_path, result.model, cfg, result.best_epoch, result.best_val);
  std::cout << "best epoch " << result.best_epoch << "  val R@1,IoU=0.5 " << result.best_val
            << "\ncheckpoint: " << ckpt_path.string() << "\n";
  return kOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& n_csv, const std::string& m_csv,
             const std::string& out_path) {
  const auto ckpt = hlgt::load_checkpoint(ckpt_path);
  const auto all = hlgt::load_dataset(fs::path(data_dir) / "manifest.jsonl");
  const auto prepped = hlgt::prepare_dataset(all, ckpt.cfg.model);
  const auto n_list = parse_int_list(n_csv);
  const auto m_list = parse_double_list(m_csv);
  const auto report = hlgt::evaluate(ckpt.model, prepped, n_list, m_list);

  std::cout << "samples: " << report.samples << "   throughput: " << report.samples_per_sec
            << " samples/s\n";
  std::cout << "  n     IoU>m    recall\n";
  for (const auto& r : report.rows) {
    std::cout << "  " << r.n << "     " << r.m << "      " << r.recall << "\n";
  }
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    for (const auto& r : report.rows) {
      json j{{"n", r.n}, {"m", r.m}, {"recall", r.recall}, {"samples", report.samples}};
      os << j.dump() << "\n";
    }
  }
  return kOk;
}

int cmd_gradcheck(const std::string& scope, double tol, bool inject_bug) {
  const auto report = hlgt::run_gradcheck_scope(scope, 1e-4, tol, inject_bug);
  std::cout << report.to_string();
  return report.pass ? kOk : kRuntimeError;
}

int cmd_predict(const std::string& ckpt_path, const std::string& features,
                const std::string& query_features, double duration) {
  const auto ckpt = hlgt::load_checkpoint(ckpt_path);
  const auto video = hlgt::read_features(features);
  const auto query = hlgt::read_features(query_features);
  const auto out = hlgt::infer(ckpt.model, video, query, duration);
  std::cout << out.tau_s << " " << out.tau_e << " " << out.confidence << "\n";
  return kOk;
}

int cmd_bench(const ConfigArgs& cargs) {
  const auto cfg = resolve_config(cargs);
  const auto report = hlgt::run_bench(cfg);
  std::cout << "forward:            " << report.forward_samples_per_sec << " samples/s\n"
            << "train step:         " << report.train_step_samples_per_sec << " samples/s\n"
            << "decoder sequential: " << report.decoder_sequential_per_sec << " iters/s\n"
            << "decoder parallel:   " << report.decoder_parallel_per_sec << " iters/s\n";
  json j{{"forward_samples_per_sec", report.forward_samples_per_sec},
         {"train_step_samples_per_sec", report.train_step_samples_per_sec},
         {"decoder_sequential_per_sec", report.decoder_sequential_per_sec},
         {"decoder_parallel_per_sec", report.decoder_parallel_per_sec}};
  std::cout << j.dump() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical local-global grounding toolkit"};
  app.require_subcommand(1);

  ConfigArgs synth_args;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a planted-segment dataset");
  add_config_options(synth, synth_args);
  synth->add_option("--out", synth_out, "output directory")->required();

  ConfigArgs train_args;
  std::string train_data, train_out, train_resume;
  bool train_quiet = false;
  auto* train = app.add_subcommand("train", "train a model on a dataset directory");
  add_config_options(train, train_args);
  train->add_option("--data", train_data, "dataset directory (with manifest.jsonl)")
      ->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to continue from");
  train->add_flag("--quiet", train_quiet, "suppress per-epoch lines");

  std::string eval_ckpt, eval_data, eval_n = "1,5", eval_m = "0.5,0.7", eval_out;
  auto* eval = app.add_subcommand("eval", "compute R@n, IoU=m on a dataset");
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--n", eval_n, "comma-separated n values");
  eval->add_option("--m", eval_m, "comma-separated IoU thresholds");
  eval->add_option("--out", eval_out, "write JSON-lines metrics here");

  std::string gc_scope = "full";
  double gc_tol = 1e-4;
  bool gc_bug = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--scope", gc_scope, "ops|blocks|encoder|decoder|losses|full");
  gradcheck->add_option("--tol", gc_tol, "max relative error");
  gradcheck->add_flag("--inject-bug", gc_bug, "negative control with a wrong gradient");

  std::string pred_ckpt, pred_feat, pred_query;
  double pred_duration = 0.0;
  auto* predict = app.add_subcommand("predict", "ground one query in one video");
  predict->add_option("--checkpoint", pred_ckpt)->required();
  predict->add_option("--features", pred_feat)->required();
  predict->add_option("--query-features", pred_query)->required();
  predict->add_option("--duration", pred_duration, "video duration in seconds")->required();

  ConfigArgs bench_args;
  auto* bench = app.add_subcommand("bench", "forward/train/decoder throughput");
  add_config_options(bench, bench_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args, synth_out);
    if (train->parsed())
      return cmd_train(train_args, train_data, train_out, train_resume, train_quiet);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_n, eval_m, eval_out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_scope, gc_tol, gc_bug);
    if (predict->parsed())
      return cmd_predict(pred_ckpt, pred_feat, pred_query, pred_duration);
    if (bench->parsed()) return cmd_bench(bench_args);
  } catch (const hlgt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const hlgt::ManifestError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
