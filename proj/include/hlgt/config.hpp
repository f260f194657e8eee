#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hlgt/data.hpp"
#include "hlgt/grounding.hpp"

namespace hlgt {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Arch {
  kFull,       // hierarchy + global branch + cycle loss
  kLocalOnly,  // global branch ablated; local tokens feed the decoder
  kFlat,       // no hierarchy: position-encoded frame/word tokens directly
};

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct ModelConfig {
  int64_t d_model = 32;
  int heads = 4;
  int64_t slots = 10;        // M segment queries
  int64_t clip_len = 8;      // L_c
  int64_t clip_overlap = 0;  // O
  int64_t phrases = 3;       // J
  int64_t t_max = 64;        // uniform downsample target
  Arch arch = Arch::kFull;
  bool cmcc_literal_scalar = false;  // verbatim scalar-cosine variant

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 1.0;
  int64_t epochs = 50;
  int64_t batch_size = 16;
  int64_t early_stop_patience = 10;
  uint64_t seed = 1;
  LossWeights weights;
  bool parallel_branches = false;
  double val_fraction = 0.2;

  void validate() const;
};

struct CliConfig {
  std::string preset;  // resolved name, informational
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
};

// Presets: paper-anet, paper-charades, paper-tacos, toy.
CliConfig make_preset(const std::string& name);

// Strict parse: unknown keys anywhere are a ConfigError. A top-level
// "preset" key seeds defaults; sections "model", "train", "synth" override
// individual fields.
CliConfig parse_config_json(const std::string& text);
CliConfig load_config_file(const std::filesystem::path& path);

std::string config_to_json(const CliConfig& cfg);

}  // namespace hlgt
