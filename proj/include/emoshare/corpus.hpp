#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "emoshare/cache.hpp"
#include "emoshare/emotion.hpp"
#include "emoshare/errors.hpp"
#include "emoshare/features.hpp"
#include "emoshare/random.hpp"
#include "emoshare/wav.hpp"

namespace emoshare {

enum class Split { train, dev, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct Utterance {
  std::string id;
  std::string audio_path;
  Split split = Split::train;
  double duration_s = 0.0;
  std::optional<EmotionShare> target;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Manifest {
  std::vector<Utterance> utterances;
  std::map<std::string, std::string> metadata;
  // Directory relative audio paths resolve against; not serialized.
  std::filesystem::path base_dir;

  std::vector<const Utterance*> split(Split s) const {
    std::vector<const Utterance*> out;
    for (const auto& u : utterances)
      if (u.split == s) out.push_back(&u);
    return out;
  }

  std::filesystem::path resolve(const Utterance& u) const {
    std::filesystem::path p(u.audio_path);
    return p.is_absolute() ? p : base_dir / p;
  }

  // Training needs labelled train and dev data.
  void require_trainable() const {
    for (Split s : {Split::train, Split::dev}) {
      const auto rows = split(s);
      if (rows.empty()) throw ValidationError("manifest has no " + to_string(s) + " utterances");
      for (const auto* u : rows)
        if (!u->target) throw ValidationError("utterance '" + u->id + "' in " + to_string(s) + " has no targets");
    }
  }

  friend bool operator==(const Manifest& a, const Manifest& b) {
    return a.utterances == b.utterances && a.metadata == b.metadata;
  }
};

inline const std::array<std::string, 4> kManifestLeadColumns = {"id", "audio_path", "split", "duration_s"};

inline std::vector<std::string> manifest_columns() {
  std::vector<std::string> cols(kManifestLeadColumns.begin(), kManifestLeadColumns.end());
  for (auto e : all_emotions()) cols.push_back(e.key());
  return cols;
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::filesystem::path metadata_path(const std::filesystem::path& manifest_path) {
  auto p = manifest_path;
  p += ".meta.json";
  return p;
}

}  // namespace detail

// Parses the CSV manifest (and its optional `<path>.meta.json` metadata).
// Row numbers in error messages count the header as row 1.
inline Manifest load_manifest(const std::filesystem::path& path, bool validate_audio = false) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());

  std::string line;
  if (!std::getline(is, line)) throw SchemaError(path.string() + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& name : manifest_columns())
    if (!col.count(name)) throw SchemaError(path.string() + ": missing column '" + name + "'");

  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = path.string() + " row " + std::to_string(row);
    if (f.size() != header.size()) throw ValidationError(where + ": expected " + std::to_string(header.size()) +
                                                         " fields, found " + std::to_string(f.size()));
    Utterance u;
    u.id = f[col["id"]];
    if (u.id.empty()) throw ValidationError(where + ": empty id");
    if (!seen.insert(u.id).second) throw ValidationError(where + ": duplicate id '" + u.id + "'");
    u.audio_path = f[col["audio_path"]];
    u.split = parse_split(f[col["split"]]);
    const auto dur = detail::parse_double(f[col["duration_s"]]);
    if (!dur || !(*dur > 0.0) || !std::isfinite(*dur)) throw ValidationError(where + ": duration_s must be > 0");
    u.duration_s = *dur;

    std::size_t empty = 0;
    EmotionShare share;
    for (auto e : all_emotions()) {
      const std::string& cell = f[col[e.key()]];
      if (cell.empty()) {
        ++empty;
        continue;
      }
      const auto v = detail::parse_double(cell);
      if (!v) throw ValidationError(where + ": '" + e.key() + "' is not a number");
      if (!(*v >= 0.0 && *v <= 1.0))
        throw ValidationError(where + ": share '" + e.key() + "' = " + cell + " outside [0, 1]");
      share[e] = *v;
    }
    if (empty == kNumEmotions) {
      if (u.split != Split::test) throw ValidationError(where + ": targets missing outside the test split");
    } else if (empty != 0) {
      throw ValidationError(where + ": targets partially missing");
    } else {
      u.target = share;
    }
    if (validate_audio && !std::filesystem::exists(m.resolve(u)))
      throw ValidationError(where + ": audio file " + m.resolve(u).string() + " does not exist");
    m.utterances.push_back(std::move(u));
  }

  const auto meta = detail::metadata_path(path);
  if (std::filesystem::exists(meta)) {
    std::ifstream ms(meta);
    const auto j = nlohmann::json::parse(ms, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError(meta.string() + ": malformed metadata");
    for (const auto& [k, v] : j.items()) m.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest " + path.string());
  const auto cols = manifest_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& u : m.utterances) {
    if (u.id.find(',') != std::string::npos || u.audio_path.find(',') != std::string::npos)
      throw ValidationError("utterance '" + u.id + "': commas are not allowed in ids or paths");
    os << u.id << ',' << u.audio_path << ',' << to_string(u.split) << ',' << detail::format_double(u.duration_s);
    for (auto e : all_emotions()) {
      os << ',';
      if (u.target) os << detail::format_double((*u.target)[e]);
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing manifest " + path.string());

  const auto meta = detail::metadata_path(path);
  if (m.metadata.empty()) {
    std::filesystem::remove(meta);
  } else {
    std::ofstream ms(meta, std::ios::trunc);
    ms << nlohmann::json(m.metadata).dump(2) << '\n';
    if (!ms) throw IoError("failed writing " + meta.string());
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus
//
// Each utterance draws a latent u ~ U[0, 1) and a duration ~ U[1 s, 8 s].
// Emotion k's share is a strictly monotone curve of u:
//   g_k(u)  = u^(0.5 + 0.25 k)
//   share_k = 0.05 + 0.9 g_k(u)  for even k (rising)
//   share_k = 0.95 - 0.9 g_k(u)  for odd k  (falling)
// so every emotion's targets rank-correlate perfectly (|rho| = 1) with u.
//
// mode=feature writes "synthetic" cache files directly: frame t, dim d is
//   (2u - 1) * a_d + 0.25 * n,  a_d = (-1)^d (0.5 + 0.5 d / D),  n ~ N(0, 1)
// with T = max(1, floor(duration / frame_period)).
// mode=waveform writes 16 kHz wav files holding a sine whose frequency
// (150 + 500u Hz) and amplitude (0.1 + 0.4u) follow u, plus light noise.
// Every fourth utterance (index % 4 == 3) goes to dev, the rest to train.
// ---------------------------------------------------------------------------

enum class SyntheticMode { waveform, feature };

struct SyntheticOptions {
  int feature_dim = FeatureKind::kDefaultSyntheticDim;
  double frame_period_ms = FeatureKind::kDefaultSyntheticPeriodMs;
  double min_duration_s = 1.0;
  double max_duration_s = 8.0;
};

inline double synthetic_share(EmotionId e, double latent) {
  const std::size_t k = e.index();
  const double g = std::pow(latent, 0.5 + 0.25 * static_cast<double>(k));
  return k % 2 == 0 ? 0.05 + 0.9 * g : 0.95 - 0.9 * g;
}

inline int synthetic_frame_count(double duration_s, double frame_period_ms) {
  return std::max(1, static_cast<int>(std::floor(duration_s * 1000.0 / frame_period_ms + 1e-9)));
}

inline constexpr std::size_t kMaxSyntheticSamples = 400 + 796 * 160 + 159;

struct SyntheticCorpus {
  Manifest manifest;
  std::vector<double> latents;
  std::filesystem::path manifest_path;
  // Cache root holding the feature files (feature mode only).
  std::filesystem::path cache_root;
};

inline SyntheticCorpus generate_synthetic(int n, std::uint64_t seed, SyntheticMode mode,
                                          const std::filesystem::path& out_dir, const SyntheticOptions& opt = {}) {
  if (n < 1) throw InputError("synthetic corpus needs n >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  SyntheticCorpus out;
  out.manifest_path = out_dir / "manifest.csv";
  out.cache_root = out_dir / "cache";
  Manifest& m = out.manifest;
  m.base_dir = out_dir;
  m.metadata = {{"corpus", "synthetic"},
                {"mode", mode == SyntheticMode::feature ? "feature" : "waveform"},
                {"n", std::to_string(n)},
                {"seed", std::to_string(seed)},
                {"sample_rate", "16000"}};
  const FeatureKind kind = FeatureKind::synthetic(opt.feature_dim, opt.frame_period_ms);
  if (mode == SyntheticMode::feature) {
    m.metadata["feature_dim"] = std::to_string(opt.feature_dim);
    m.metadata["frame_period_ms"] = detail::format_double(opt.frame_period_ms);
  }

  Random rng(seed);
  for (int i = 0; i < n; ++i) {
    Utterance u;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%04d", i);
    u.id = id;
    const bool dev = (i % 4 == 3) || (n >= 2 && n < 4 && i == n - 1);
    u.split = dev ? Split::dev : Split::train;
    const double latent = rng.uniform();
    const double duration = rng.uniform(opt.min_duration_s, opt.max_duration_s);
    EmotionShare share;
    for (auto e : all_emotions()) share[e] = synthetic_share(e, latent);
    u.target = share;
    out.latents.push_back(latent);

    if (mode == SyntheticMode::feature) {
      const int frames = synthetic_frame_count(duration, opt.frame_period_ms);
      u.duration_s = duration;
      FeatureSequence seq{u.id, FeatureMatrix(frames, opt.feature_dim), kind};
      for (int t = 0; t < frames; ++t)
        for (int d = 0; d < opt.feature_dim; ++d) {
          const double a = (d % 2 == 0 ? 1.0 : -1.0) * (0.5 + 0.5 * d / opt.feature_dim);
          seq.data(t, d) = static_cast<float>((2.0 * latent - 1.0) * a + 0.25 * rng.normal());
        }
      const auto path = write_cache(seq, cache_dir(out.cache_root, kind, to_string(u.split)));
      u.audio_path = std::filesystem::relative(path, out_dir).generic_string();
    } else {
      // Capped so melfb40/mfcc stay within the 797-frame acoustic maximum.
      const auto n_samples = std::min<std::size_t>(static_cast<std::size_t>(std::lround(duration * 16000.0)),
                                                   kMaxSyntheticSamples);
      u.duration_s = static_cast<double>(n_samples) / 16000.0;
      Waveform wav;
      wav.samples.resize(n_samples);
      const double freq = 150.0 + 500.0 * latent;
      const double amp = 0.1 + 0.4 * latent;
      for (std::size_t s = 0; s < n_samples; ++s)
        wav.samples[s] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * s / 16000.0) +
                                            0.01 * rng.normal());
      std::filesystem::create_directories(out_dir / "audio");
      write_wav(out_dir / "audio" / (u.id + ".wav"), wav);
      u.audio_path = "audio/" + u.id + ".wav";
    }
    m.utterances.push_back(std::move(u));
  }
  save_manifest(m, out.manifest_path);
  return out;
}

}  // namespace emoshare
