#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoshare/errors.hpp"
#include "emoshare/features.hpp"
#include "emoshare/tensor.hpp"

namespace emoshare {

// Zero-padded features for N utterances plus their true lengths. Targets
// hold a single emotion's share per sample and are empty at inference.
struct PaddedBatch {
  Tensor3<float> features;
  std::vector<int> lengths;
  std::vector<double> targets;
  std::vector<std::string> ids;

  int size() const { return features.n(); }
  int max_length() const { return features.l(); }
  int dim() const { return features.d(); }
};

inline PaddedBatch pad_to_max(std::span<const FeatureSequence> seqs, int max_length) {
  if (seqs.empty()) throw InputError("cannot pad an empty batch");
  const int dim = static_cast<int>(seqs.front().data.cols());
  PaddedBatch batch;
  batch.features = Tensor3<float>(static_cast<int>(seqs.size()), max_length, dim);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    if (s.data.cols() != dim)
      throw ShapeError("sequence '" + s.utterance_id + "' has dim " + std::to_string(s.data.cols()) +
                       ", batch dim is " + std::to_string(dim));
    if (s.true_length() < 1) throw LengthError("sequence '" + s.utterance_id + "' is empty");
    if (s.true_length() > max_length)
      throw LengthError("sequence '" + s.utterance_id + "' has " + std::to_string(s.true_length()) +
                        " frames, more than the maximum " + std::to_string(max_length));
    batch.features.sample(static_cast<int>(i)).topRows(s.true_length()) = s.data;
    batch.lengths.push_back(s.true_length());
    batch.ids.push_back(s.utterance_id);
  }
  return batch;
}

// Inverse of pad_to_max for one sample: the unpadded rows.
inline FeatureMatrix unpad(const PaddedBatch& batch, int i) {
  return batch.features.sample(i).topRows(batch.lengths.at(i));
}

// Conv stage geometry. The defaults halve the time axis.
struct ConvGeometry {
  int kernel = 5;
  int stride = 2;
  int padding = 2;

  int output_length(int length) const { return (length + 2 * padding - kernel) / stride + 1; }
};

// True length after the kernel-5, stride-2, padding-2 convolution.
inline int length_after_conv(int length) {
  if (length < 1) throw LengthError("length must be >= 1");
  return (length + 1) / 2;
}

inline std::vector<int> lengths_after_conv(std::span<const int> lengths) {
  std::vector<int> out;
  out.reserve(lengths.size());
  for (int l : lengths) out.push_back(length_after_conv(l));
  return out;
}

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Mask make_mask(std::span<const int> lengths, int length) {
  Mask mask(static_cast<Eigen::Index>(lengths.size()), length);
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] > length || lengths[i] < 0)
      throw LengthError("length " + std::to_string(lengths[i]) + " does not fit in " + std::to_string(length));
    for (int t = 0; t < length; ++t) mask(static_cast<Eigen::Index>(i), t) = t < lengths[i];
  }
  return mask;
}

// utterance id -> true frame count.
class LengthDictionary {
 public:
  void set(const std::string& id, int length) {
    if (length < 1) throw LengthError("length for '" + id + "' must be >= 1");
    lengths_[id] = length;
  }

  int at(const std::string& id) const {
    auto it = lengths_.find(id);
    if (it == lengths_.end()) throw LengthError("no recorded length for '" + id + "'");
    return it->second;
  }

  bool contains(const std::string& id) const { return lengths_.count(id) != 0; }
  std::size_t size() const { return lengths_.size(); }

  int max_length() const {
    int m = 0;
    for (const auto& [id, l] : lengths_) m = std::max(m, l);
    return m;
  }

  const std::map<std::string, int>& entries() const { return lengths_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << nlohmann::json(lengths_).dump(1) << '\n';
  }

  static LengthDictionary load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    const auto j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError(path.string() + ": expected a JSON object");
    LengthDictionary d;
    for (const auto& [id, v] : j.items()) {
      if (!v.is_number_integer()) throw FormatError(path.string() + ": length for '" + id + "' is not an integer");
      d.set(id, v.get<int>());
    }
    return d;
  }

  friend bool operator==(const LengthDictionary&, const LengthDictionary&) = default;

 private:
  std::map<std::string, int> lengths_;
};

// Default padded length per feature frame rate: 398 for 20 ms embeddings,
// 797 for 10 ms acoustic frames. Corpora are checked against it when
// datasets are built.
inline int default_max_length(const FeatureKind& kind) {
  if (kind.is_pretrained()) return 398;
  if (kind.is_acoustic()) return 797;
  return static_cast<int>(8000.0 / kind.frame_period_ms);
}

}  // namespace emoshare
