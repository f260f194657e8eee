#include "hlgt/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace hlgt {

using nlohmann::json;

std::string to_string(Arch a) {
  switch (a) {
    case Arch::kFull: return "full";
    case Arch::kLocalOnly: return "local-only";
    case Arch::kFlat: return "flat";
  }
  return "full";
}

Arch arch_from_string(const std::string& s) {
  if (s == "full") return Arch::kFull;
  if (s == "local-only") return Arch::kLocalOnly;
  if (s == "flat") return Arch::kFlat;
  throw ConfigError("unknown arch '" + s + "' (expected full|local-only|flat)");
}

void ModelConfig::validate() const {
  if (d_model < 2 || d_model % 2 != 0)
    throw ConfigError("d_model must be even and >= 2, got " + std::to_string(d_model));
  if (heads < 1 || d_model % heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " must be divisible by heads " + std::to_string(heads));
  if (slots < 1) throw ConfigError("slots must be >= 1");
  if (clip_len < 1) throw ConfigError("clip_len must be >= 1");
  if (clip_overlap < 0 || clip_overlap >= clip_len)
    throw ConfigError("clip_overlap must satisfy 0 <= overlap < clip_len");
  if (phrases < 1) throw ConfigError("phrases must be >= 1");
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (!(grad_clip_norm > 0)) throw ConfigError("grad_clip_norm must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(val_fraction > 0 && val_fraction < 1))
    throw ConfigError("val_fraction must lie in (0, 1)");
  if (weights.l1 < 0 || weights.iou < 0 || weights.final_balance < 0 ||
      weights.neg_conf < 0)
    throw ConfigError("loss weights must be non-negative");
}

CliConfig make_preset(const std::string& name) {
  CliConfig cfg;
  cfg.preset = name;
  if (name == "toy") {
    // defaults above are the toy preset
    return cfg;
  }
  if (name == "paper-anet" || name == "paper-charades" || name == "paper-tacos") {
    cfg.model.d_model = 1024;
    cfg.model.heads = 8;
    cfg.model.slots = 10;
    cfg.model.clip_len = 16;
    cfg.model.clip_overlap = 0;
    cfg.model.phrases = 3;
    cfg.model.t_max = 256;
    cfg.train.learning_rate = (name == "paper-tacos") ? 2e-4 : 3e-4;
    cfg.train.grad_clip_norm = 1.0;
    cfg.train.epochs = 80;
    cfg.train.batch_size = 16;
    cfg.train.weights = LossWeights{};  // 0.8 / 0.5 / 0.2 / 0.1
    cfg.synth.frames = 256;
    cfg.synth.words = 16;
    cfg.synth.dim = 1024;
    return cfg;
  }
  throw ConfigError("unknown preset '" + name +
                    "' (known: toy, paper-anet, paper-charades, paper-tacos)");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

void parse_model(const json& j, ModelConfig& m) {
  reject_unknown(j,
                 {"d_model", "heads", "slots", "clip_len", "clip_overlap", "phrases",
                  "t_max", "arch", "cmcc"},
                 "model");
  maybe(j, "d_model", m.d_model);
  maybe(j, "heads", m.heads);
  maybe(j, "slots", m.slots);
  maybe(j, "clip_len", m.clip_len);
  maybe(j, "clip_overlap", m.clip_overlap);
  maybe(j, "phrases", m.phrases);
  maybe(j, "t_max", m.t_max);
  if (j.contains("arch")) m.arch = arch_from_string(j.at("arch").get<std::string>());
  if (j.contains("cmcc")) {
    const auto s = j.at("cmcc").get<std::string>();
    if (s == "distribution") m.cmcc_literal_scalar = false;
    else if (s == "literal-scalar") m.cmcc_literal_scalar = true;
    else throw ConfigError("cmcc must be 'distribution' or 'literal-scalar'");
  }
}

void parse_train(const json& j, TrainConfig& t) {
  reject_unknown(j,
                 {"learning_rate", "beta1", "beta2", "adam_eps", "grad_clip_norm",
                  "epochs", "batch_size", "early_stop_patience", "seed", "lambda_l1",
                  "lambda_iou", "lambda_f", "lambda_neg", "parallel_branches",
                  "val_fraction"},
                 "train");
  maybe(j, "learning_rate", t.learning_rate);
  maybe(j, "beta1", t.beta1);
  maybe(j, "beta2", t.beta2);
  maybe(j, "adam_eps", t.adam_eps);
  maybe(j, "grad_clip_norm", t.grad_clip_norm);
  maybe(j, "epochs", t.epochs);
  maybe(j, "batch_size", t.batch_size);
  maybe(j, "early_stop_patience", t.early_stop_patience);
  maybe(j, "seed", t.seed);
  maybe(j, "lambda_l1", t.weights.l1);
  maybe(j, "lambda_iou", t.weights.iou);
  maybe(j, "lambda_f", t.weights.final_balance);
  maybe(j, "lambda_neg", t.weights.neg_conf);
  maybe(j, "parallel_branches", t.parallel_branches);
  maybe(j, "val_fraction", t.val_fraction);
}

void parse_synth(const json& j, SynthConfig& s) {
  reject_unknown(j,
                 {"seed", "samples", "frames", "words", "dim", "phrases", "noise_std",
                  "signal_strength", "code_bias", "seg_min_frac", "seg_max_frac"},
                 "synth");
  maybe(j, "seed", s.seed);
  maybe(j, "samples", s.samples);
  maybe(j, "frames", s.frames);
  maybe(j, "words", s.words);
  maybe(j, "dim", s.dim);
  maybe(j, "phrases", s.phrases);
  maybe(j, "noise_std", s.noise_std);
  maybe(j, "signal_strength", s.signal_strength);
  maybe(j, "code_bias", s.code_bias);
  maybe(j, "seg_min_frac", s.seg_min_frac);
  maybe(j, "seg_max_frac", s.seg_max_frac);
}

}  // namespace

CliConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown(j, {"preset", "model", "train", "synth"}, "config root");
  CliConfig cfg;
  if (j.contains("preset")) cfg = make_preset(j.at("preset").get<std::string>());
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
  cfg.model.validate();
  cfg.train.validate();
  cfg.synth.validate();
  if (cfg.synth.dim != cfg.model.d_model)
    throw ConfigError("synth.dim " + std::to_string(cfg.synth.dim) +
                      " must equal model.d_model " + std::to_string(cfg.model.d_model));
  return cfg;
}

CliConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const CliConfig& cfg) {
  json j{
      {"preset", cfg.preset},
      {"model",
       {{"d_model", cfg.model.d_model},
        {"heads", cfg.model.heads},
        {"slots", cfg.model.slots},
        {"clip_len", cfg.model.clip_len},
        {"clip_overlap", cfg.model.clip_overlap},
        {"phrases", cfg.model.phrases},
        {"t_max", cfg.model.t_max},
        {"arch", to_string(cfg.model.arch)},
        {"cmcc", cfg.model.cmcc_literal_scalar ? "literal-scalar" : "distribution"}}},
      {"train",
       {{"learning_rate", cfg.train.learning_rate},
        {"beta1", cfg.train.beta1},
        {"beta2", cfg.train.beta2},
        {"adam_eps", cfg.train.adam_eps},
        {"grad_clip_norm", cfg.train.grad_clip_norm},
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"early_stop_patience", cfg.train.early_stop_patience},
        {"seed", cfg.train.seed},
        {"lambda_l1", cfg.train.weights.l1},
        {"lambda_iou", cfg.train.weights.iou},
        {"lambda_f", cfg.train.weights.final_balance},
        {"lambda_neg", cfg.train.weights.neg_conf},
        {"parallel_branches", cfg.train.parallel_branches},
        {"val_fraction", cfg.train.val_fraction}}},
      {"synth",
       {{"seed", cfg.synth.seed},
        {"samples", cfg.synth.samples},
        {"frames", cfg.synth.frames},
        {"words", cfg.synth.words},
        {"dim", cfg.synth.dim},
        {"phrases", cfg.synth.phrases},
        {"noise_std", cfg.synth.noise_std},
        {"signal_strength", cfg.synth.signal_strength},
        {"code_bias", cfg.synth.code_bias},
        {"seg_min_frac", cfg.synth.seg_min_frac},
        {"seg_max_frac", cfg.synth.seg_max_frac}}}};
  return j.dump(2);
}

}  // namespace hlgt
