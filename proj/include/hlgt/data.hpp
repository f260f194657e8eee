#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hlgt/rng.hpp"
#include "hlgt/tensor.hpp"

namespace hlgt {

// Feature-file format faults, each its own type so callers can tell a wrong
// container from a torn download from a future writer.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};
class BadMagicError : public FormatError {
 public:
  explicit BadMagicError(const std::string& what) : FormatError(what) {}
};
class VersionMismatchError : public FormatError {
 public:
  explicit VersionMismatchError(const std::string& what) : FormatError(what) {}
};
class TruncatedPayloadError : public FormatError {
 public:
  explicit TruncatedPayloadError(const std::string& what) : FormatError(what) {}
};

class ManifestError : public std::runtime_error {
 public:
  explicit ManifestError(const std::string& what) : std::runtime_error(what) {}
};

// Binary container: "HLGT" magic, u16 LE version (=1), u32 LE rows, u32 LE
// cols, then rows*cols little-endian IEEE-754 float32 values, row-major.
inline constexpr uint16_t kFeatureFileVersion = 1;

void write_features(const Tensor& seq, const std::filesystem::path& path);
Tensor read_features(const std::filesystem::path& path);

// Stream variants used by the checkpoint container.
void write_features_stream(const Tensor& seq, std::ostream& os);
Tensor read_features_stream(std::istream& is, const std::string& context);

struct SampleRecord {
  std::string id;
  std::filesystem::path video_features;  // resolved against the manifest dir
  std::filesystem::path query_features;
  std::vector<std::string> query_tokens;  // optional
  double tau_s = 0.0;
  double tau_e = 0.0;
  double duration = 0.0;
};

// JSON-lines manifest: one record per line with fields id, video_features,
// query_features, tau_s, tau_e, duration (+ optional query_tokens).
// Validation failures name the line number and sample id.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);

// Endpoint-preserving uniform subsampling: row k of the result is source
// row round(k*(T'-1)/(T-1)). Sequences already at or below the target
// length pass through unchanged.
Tensor downsample_uniform(const Tensor& seq, int64_t target_len);
std::vector<int64_t> downsample_indices(int64_t source_len, int64_t target_len);

struct SynthConfig {
  uint64_t seed = 7;
  int64_t samples = 250;
  int64_t frames = 64;          // T
  int64_t words = 12;           // N
  int64_t dim = 32;             // D
  int64_t phrases = 3;          // J, conceptual split of the query words
  double noise_std = 0.5;
  double signal_strength = 2.0;
  double code_bias = 0.5;  // per-dim mean of the latent code before normalization
  double seg_min_frac = 0.25;   // segment length bounds as fractions of T
  double seg_max_frac = 0.5;

  void validate() const;
};

struct SynthSample {
  std::string id;
  Tensor video;   // T x D
  Tensor query;   // N x D
  double tau_s = 0.0;
  double tau_e = 0.0;
  double duration = 0.0;  // seconds; 1 frame per second
};

// Planted-segment benchmark: in-segment frames carry signal_strength*code
// plus noise, background frames are pure noise, query words are noisy copies
// of the code. Deterministic per seed.
std::vector<SynthSample> synth_generate(const SynthConfig& cfg);

// Materialize a dataset as feature files + manifest.jsonl under `dir`.
void write_dataset(const std::vector<SynthSample>& samples,
                   const std::filesystem::path& dir);

struct LoadedSample {
  std::string id;
  Tensor video;
  Tensor query;
  double tau_s = 0.0;
  double tau_e = 0.0;
  double duration = 0.0;
  // normalized ground truth fractions
  double gt_start = 0.0;
  double gt_end = 0.0;
};

// Reads every record's feature files; ground truth is normalized by the
// duration here, once.
std::vector<LoadedSample> load_dataset(const std::filesystem::path& manifest);

// Deterministic batch order for one epoch; the final short batch is kept.
std::vector<std::vector<size_t>> make_batches(size_t n, size_t batch_size, Rng& rng,
                                              bool shuffle = true);

}  // namespace hlgt
