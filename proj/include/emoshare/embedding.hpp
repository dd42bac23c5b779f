#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include "emoshare/cache.hpp"
#include "emoshare/errors.hpp"
#include "emoshare/features.hpp"
#include "emoshare/wav.hpp"

namespace emoshare {

// Frame count of the wav2vec2/HuBERT convolutional front end: a 400-sample
// receptive field advanced 320 samples (20 ms at 16 kHz) per frame.
inline int ssl_frame_count(std::size_t n_samples) { return frame_count(n_samples, 400, 320); }

// Boundary to a pretrained speech model. Implementations return the hidden
// states of one layer as a T x D matrix, D == kind().dim.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual FeatureKind kind() const = 0;
  virtual FeatureMatrix embed(const Waveform& wav) = 0;
  // Whether one instance may serve several workers at once.
  virtual bool shareable() const { return false; }
};

class EmbeddingRegistry {
 public:
  void add(std::unique_ptr<EmbeddingProvider> provider) {
    auto name = provider->kind().name();
    providers_[std::move(name)] = std::move(provider);
  }

  bool contains(std::string_view model_id) const { return providers_.count(std::string(model_id)) != 0; }

  EmbeddingProvider& get(std::string_view model_id) const {
    auto it = providers_.find(std::string(model_id));
    if (it == providers_.end())
      throw ConfigurationError("no checkpoint configured for pretrained model '" + std::string(model_id) + "'");
    return *it->second;
  }

 private:
  std::map<std::string, std::unique_ptr<EmbeddingProvider>, std::less<>> providers_;
};

inline FeatureSequence extract_embeddings(const Waveform& wav, std::string_view model_id,
                                          const EmbeddingRegistry& registry, std::string utterance_id = {}) {
  const FeatureKind expected = FeatureKind::parse(model_id);
  if (!expected.is_pretrained())
    throw ConfigurationError("'" + std::string(model_id) + "' is not a pretrained-model feature kind");
  EmbeddingProvider& provider = registry.get(model_id);
  if (wav.sample_rate != 16000)
    throw InputError("utterance '" + utterance_id + "': pretrained models need 16 kHz audio");

  FeatureMatrix hidden;
  try {
    hidden = provider.embed(wav);
  } catch (const std::exception& e) {
    throw ExtractionError("embedding extraction failed for utterance '" + utterance_id + "' with " +
                          std::string(model_id) + ": " + e.what());
  }
  FeatureSequence seq{std::move(utterance_id), std::move(hidden), expected};
  try {
    seq.validate();
  } catch (const Error& e) {
    throw ExtractionError(std::string("adapter returned malformed output: ") + e.what());
  }
  return seq;
}

// Runs an external program per utterance. The command template may use
// {wav}, {out}, {model} and {layer}; the program reads the 16 kHz wav and
// writes an .emsf file to {out}. Layer -1 selects the final layer.
class ExternalCommandProvider final : public EmbeddingProvider {
 public:
  ExternalCommandProvider(FeatureKind kind, std::string command_template, std::filesystem::path scratch_dir,
                          int layer = -1)
      : kind_(std::move(kind)), template_(std::move(command_template)), scratch_(std::move(scratch_dir)),
        layer_(layer) {}

  FeatureKind kind() const override { return kind_; }

  FeatureMatrix embed(const Waveform& wav) override {
    std::filesystem::create_directories(scratch_);
    const auto stem = "req" + std::to_string(counter_++);
    const auto wav_path = scratch_ / (stem + ".wav");
    const auto out_path = scratch_ / (stem + kCacheExtension);
    write_wav(wav_path, wav);

    std::string cmd = template_;
    substitute(cmd, "{wav}", quote(wav_path.string()));
    substitute(cmd, "{out}", quote(out_path.string()));
    substitute(cmd, "{model}", kind_.name());
    substitute(cmd, "{layer}", std::to_string(layer_));
    const int rc = std::system(cmd.c_str());
    std::filesystem::remove(wav_path);
    if (rc != 0) throw ExtractionError("command exited with status " + std::to_string(rc) + ": " + cmd);
    auto seq = read_cache_file(out_path, kind_);
    std::filesystem::remove(out_path);
    return std::move(seq.data);
  }

 private:
  static void substitute(std::string& s, std::string_view key, const std::string& value) {
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
      s.replace(pos, key.size(), value);
  }

  static std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
  }

  FeatureKind kind_;
  std::string template_;
  std::filesystem::path scratch_;
  int layer_;
  unsigned counter_ = 0;
};

}  // namespace emoshare
