#include "hlgt/data.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hlgt {

namespace {

using nlohmann::json;

void put_u16(std::ostream& os, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

constexpr char kMagic[4] = {'H', 'L', 'G', 'T'};
constexpr size_t kHeaderBytes = 4 + 2 + 4 + 4;

}  // namespace

void write_features_stream(const Tensor& seq, std::ostream& os) {
  check_finite(seq, "write_features");
  os.write(kMagic, 4);
  put_u16(os, kFeatureFileVersion);
  put_u32(os, static_cast<uint32_t>(seq.rows()));
  put_u32(os, static_cast<uint32_t>(seq.cols()));
  static_assert(sizeof(float) == 4);
  // Payload is float32 LE; this writer assumes a little-endian host.
  os.write(reinterpret_cast<const char*>(seq.values().data()),
           static_cast<std::streamsize>(seq.values().size() * sizeof(float)));
  if (!os) throw FormatError("write_features: stream write failed");
}

void write_features(const Tensor& seq, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("write_features: cannot open " + path.string());
  write_features_stream(seq, os);
}

Tensor read_features_stream(std::istream& is, const std::string& context) {
  unsigned char header[kHeaderBytes];
  is.read(reinterpret_cast<char*>(header), kHeaderBytes);
  if (static_cast<size_t>(is.gcount()) != kHeaderBytes)
    throw TruncatedPayloadError(context + ": header truncated, expected " +
                                std::to_string(kHeaderBytes) + " bytes, got " +
                                std::to_string(is.gcount()));
  if (std::memcmp(header, kMagic, 4) != 0)
    throw BadMagicError(context + ": bad magic, expected \"HLGT\"");
  const uint16_t version = get_u16(header + 4);
  if (version != kFeatureFileVersion)
    throw VersionMismatchError(context + ": unsupported version " +
                               std::to_string(version) + ", expected " +
                               std::to_string(kFeatureFileVersion));
  const uint32_t rows = get_u32(header + 6);
  const uint32_t cols = get_u32(header + 10);
  if (rows == 0 || cols == 0)
    throw FormatError(context + ": zero dimension in header");
  const size_t want = static_cast<size_t>(rows) * cols * sizeof(float);
  std::vector<float> payload(static_cast<size_t>(rows) * cols);
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(want));
  if (static_cast<size_t>(is.gcount()) != want)
    throw TruncatedPayloadError(context + ": payload truncated, expected " +
                                std::to_string(want) + " bytes, got " +
                                std::to_string(is.gcount()));
  return Tensor::from(rows, cols, std::move(payload));
}

Tensor read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("read_features: cannot open " + path.string());
  return read_features_stream(is, path.string());
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ManifestError("load_manifest: cannot open " + path.string());
  const auto base = path.parent_path();
  std::vector<SampleRecord> records;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ManifestError(where + ": malformed record: " + e.what());
    }
    SampleRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.video_features = base / j.at("video_features").get<std::string>();
      r.query_features = base / j.at("query_features").get<std::string>();
      r.tau_s = j.at("tau_s").get<double>();
      r.tau_e = j.at("tau_e").get<double>();
      r.duration = j.at("duration").get<double>();
      if (j.contains("query_tokens"))
        r.query_tokens = j.at("query_tokens").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ManifestError(where + ": missing or mistyped field: " + e.what());
    }
    if (!(r.tau_s >= 0.0) || !(r.tau_s < r.tau_e) || !(r.tau_e <= r.duration))
      throw ManifestError(where + ": sample '" + r.id +
                          "' needs 0 <= tau_s < tau_e <= duration, got tau_s=" +
                          std::to_string(r.tau_s) + " tau_e=" + std::to_string(r.tau_e) +
                          " duration=" + std::to_string(r.duration));
    if (!std::filesystem::exists(r.video_features))
      throw ManifestError(where + ": sample '" + r.id + "' video features missing: " +
                          r.video_features.string());
    if (!std::filesystem::exists(r.query_features))
      throw ManifestError(where + ": sample '" + r.id + "' query features missing: " +
                          r.query_features.string());
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<int64_t> downsample_indices(int64_t source_len, int64_t target_len) {
  std::vector<int64_t> idx(static_cast<size_t>(target_len));
  if (target_len == 1) {
    idx[0] = 0;
    return idx;
  }
  for (int64_t k = 0; k < target_len; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(source_len - 1) /
                       static_cast<double>(target_len - 1);
    idx[static_cast<size_t>(k)] = std::llround(pos);
  }
  return idx;
}

Tensor downsample_uniform(const Tensor& seq, int64_t target_len) {
  if (target_len < 1) throw ShapeError("downsample_uniform: target must be positive");
  if (seq.rows() <= target_len) return seq;
  const auto idx = downsample_indices(seq.rows(), target_len);
  Tensor out(target_len, seq.cols());
  for (int64_t k = 0; k < target_len; ++k)
    for (int64_t c = 0; c < seq.cols(); ++c)
      out.at(k, c) = seq.at(idx[static_cast<size_t>(k)], c);
  return out;
}

void SynthConfig::validate() const {
  if (samples < 1) throw std::invalid_argument("synth: samples must be positive");
  if (frames < 2) throw std::invalid_argument("synth: frames must be >= 2");
  if (words < 1) throw std::invalid_argument("synth: words must be positive");
  if (dim < 1) throw std::invalid_argument("synth: dim must be positive");
  if (phrases < 1 || phrases > words)
    throw std::invalid_argument("synth: need 1 <= phrases <= words");
  if (noise_std < 0.0) throw std::invalid_argument("synth: noise_std must be >= 0");
  if (code_bias < 0.0) throw std::invalid_argument("synth: code_bias must be >= 0");
  if (!(seg_min_frac > 0.0) || !(seg_max_frac <= 1.0) || seg_min_frac > seg_max_frac)
    throw std::invalid_argument(
        "synth: segment fractions must satisfy 0 < min <= max <= 1");
  if (static_cast<int64_t>(seg_min_frac * static_cast<double>(frames)) < 1)
    throw std::invalid_argument("synth: seg_min_frac shorter than one frame");
}

std::vector<SynthSample> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<SynthSample> out;
  out.reserve(static_cast<size_t>(cfg.samples));
  for (int64_t s = 0; s < cfg.samples; ++s) {
    Rng r = rng.fork(static_cast<uint64_t>(s) + 1);
    // Unit-norm latent code shared by the segment and the query. The code
    // distribution is shifted off center (like pretrained visual features,
    // which share generic activity components) so that signal frames are
    // separable from background noise by content, not only by energy.
    std::vector<double> code(static_cast<size_t>(cfg.dim));
    double norm = 0.0;
    for (auto& v : code) {
      v = cfg.code_bias + r.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : code) v /= norm;

    const int64_t min_len = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(cfg.seg_min_frac * static_cast<double>(cfg.frames))));
    const int64_t max_len = std::max<int64_t>(
        min_len,
        static_cast<int64_t>(std::llround(cfg.seg_max_frac * static_cast<double>(cfg.frames))));
    const int64_t seg_len = min_len + static_cast<int64_t>(r.below(
                                          static_cast<uint64_t>(max_len - min_len + 1)));
    const int64_t seg_start =
        static_cast<int64_t>(r.below(static_cast<uint64_t>(cfg.frames - seg_len + 1)));

    SynthSample sample;
    sample.id = "synth-" + std::to_string(s);
    sample.video = Tensor(cfg.frames, cfg.dim);
    for (int64_t t = 0; t < cfg.frames; ++t) {
      const bool in_seg = t >= seg_start && t < seg_start + seg_len;
      for (int64_t c = 0; c < cfg.dim; ++c) {
        const double mean = in_seg ? cfg.signal_strength * code[static_cast<size_t>(c)] : 0.0;
        sample.video.at(t, c) = static_cast<float>(mean + r.normal(0.0, cfg.noise_std));
      }
    }
    sample.query = Tensor(cfg.words, cfg.dim);
    for (int64_t n = 0; n < cfg.words; ++n)
      for (int64_t c = 0; c < cfg.dim; ++c)
        sample.query.at(n, c) = static_cast<float>(code[static_cast<size_t>(c)] +
                                                   r.normal(0.0, cfg.noise_std));
    sample.duration = static_cast<double>(cfg.frames);
    sample.tau_s = static_cast<double>(seg_start);
    sample.tau_e = static_cast<double>(seg_start + seg_len);
    out.push_back(std::move(sample));
  }
  return out;
}

void write_dataset(const std::vector<SynthSample>& samples,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw FormatError("write_dataset: cannot open manifest in " + dir.string());
  for (const auto& s : samples) {
    const std::string vpath = "features/" + s.id + "_v.feat";
    const std::string qpath = "features/" + s.id + "_q.feat";
    write_features(s.video, dir / vpath);
    write_features(s.query, dir / qpath);
    json j{{"id", s.id},
           {"video_features", vpath},
           {"query_features", qpath},
           {"tau_s", s.tau_s},
           {"tau_e", s.tau_e},
           {"duration", s.duration}};
    manifest << j.dump() << "\n";
  }
}

std::vector<LoadedSample> load_dataset(const std::filesystem::path& manifest) {
  std::vector<LoadedSample> out;
  for (const auto& rec : load_manifest(manifest)) {
    LoadedSample s;
    s.id = rec.id;
    s.video = read_features(rec.video_features);
    s.query = read_features(rec.query_features);
    s.tau_s = rec.tau_s;
    s.tau_e = rec.tau_e;
    s.duration = rec.duration;
    s.gt_start = rec.tau_s / rec.duration;
    s.gt_end = rec.tau_e / rec.duration;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<size_t>> make_batches(size_t n, size_t batch_size, Rng& rng,
                                              bool shuffle) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch size must be >= 1");
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<size_t>> batches;
  for (size_t at = 0; at < n; at += batch_size) {
    const size_t take = std::min(batch_size, n - at);
    batches.emplace_back(order.begin() + static_cast<int64_t>(at),
                         order.begin() + static_cast<int64_t>(at + take));
  }
  return batches;
}

}  // namespace hlgt
