#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "emoshare/adam.hpp"
#include "emoshare/batching.hpp"
#include "emoshare/cache.hpp"
#include "emoshare/checkpoint.hpp"
#include "emoshare/corpus.hpp"
#include "emoshare/regressor.hpp"
#include "emoshare/spearman.hpp"

namespace emoshare {

enum class Monitor { dev_spearman, dev_loss };

inline std::string to_string(Monitor m) { return m == Monitor::dev_spearman ? "dev_spearman" : "dev_loss"; }
inline Monitor parse_monitor(std::string_view s) {
  if (s == "dev_spearman") return Monitor::dev_spearman;
  if (s == "dev_loss") return Monitor::dev_loss;
  throw ConfigurationError("unknown monitor '" + std::string(s) + "'");
}

struct TrainSpec {
  FeatureKind feature_kind;
  Architecture architecture = Architecture::arch1;
  EmotionId emotion;
  int batch_size = 128;
  double learning_rate = 1e-4;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  Monitor monitor = Monitor::dev_spearman;
  // Layer sizes; architecture, input_dim and seed are taken from the fields above.
  RegressorConfig model;
  // Padded sequence length; 0 selects the feature kind's default.
  int max_length = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigurationError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigurationError("learning_rate must be > 0");
    if (max_epochs < 1) throw ConfigurationError("max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs) throw ConfigurationError("patience must lie in [1, max_epochs)");
    regressor_config().validate();
  }

  RegressorConfig regressor_config() const {
    RegressorConfig c = model;
    c.architecture = architecture;
    c.input_dim = feature_kind.dim;
    c.seed = seed;
    return c;
  }

  int padded_length() const { return max_length > 0 ? max_length : default_max_length(feature_kind); }
};

inline nlohmann::json to_json(const TrainSpec& s) {
  return {{"feature_kind", to_json(s.feature_kind)},
          {"architecture", to_string(s.architecture)},
          {"emotion", std::string(s.emotion.name())},
          {"batch_size", s.batch_size},
          {"learning_rate", s.learning_rate},
          {"max_epochs", s.max_epochs},
          {"patience", s.patience},
          {"seed", s.seed},
          {"monitor", to_string(s.monitor)},
          {"max_length", s.padded_length()},
          {"model", to_json(s.regressor_config())}};
}

// Features and targets of one split, in manifest order.
struct SplitData {
  std::vector<FeatureSequence> features;
  std::vector<std::optional<EmotionShare>> targets;

  std::size_t size() const { return features.size(); }

  std::vector<double> targets_for(EmotionId e) const {
    std::vector<double> out;
    for (const auto& t : targets) {
      if (!t) throw InputError("split contains unlabelled utterances");
      out.push_back((*t)[e]);
    }
    return out;
  }
};

inline SplitData load_split(const Manifest& manifest, const std::filesystem::path& cache_root, const FeatureKind& kind,
                            Split split, int max_length, bool require_targets = true) {
  SplitData data;
  std::vector<std::string> missing;
  const auto dir = cache_dir(cache_root, kind, to_string(split));
  for (const Utterance* u : manifest.split(split)) {
    if (require_targets && !u->target) continue;
    const auto path = cache_path(dir, u->id);
    if (!std::filesystem::exists(path)) {
      missing.push_back(u->id);
      continue;
    }
    FeatureSequence seq = read_cache(dir, u->id, kind);
    if (seq.true_length() > max_length)
      throw LengthError("utterance '" + u->id + "' has " + std::to_string(seq.true_length()) +
                        " frames, more than the padded length " + std::to_string(max_length));
    data.features.push_back(std::move(seq));
    data.targets.push_back(u->target);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size(); ++i) list += (i ? ", " : "") + missing[i];
    throw ConfigurationError("missing " + kind.name() + " cache entries in " + dir.string() + " for: " + list);
  }
  return data;
}

inline PaddedBatch make_batch(const SplitData& data, std::span<const std::size_t> rows, int max_length,
                              std::optional<EmotionId> emotion) {
  std::vector<FeatureSequence> picked;
  picked.reserve(rows.size());
  for (auto r : rows) picked.push_back(data.features.at(r));
  PaddedBatch batch = pad_to_max(picked, max_length);
  if (emotion) {
    for (auto r : rows) {
      if (!data.targets.at(r)) throw InputError("utterance '" + data.features[r].utterance_id + "' has no target");
      batch.targets.push_back((*data.targets[r])[*emotion]);
    }
  }
  return batch;
}

inline PaddedBatch make_batch(const SplitData& data, int max_length, std::optional<EmotionId> emotion) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  return make_batch(data, rows, max_length, emotion);
}

struct TrainingData {
  SplitData train;
  SplitData dev;
  FeatureKind kind;
  int max_length = 0;

  static TrainingData load(const Manifest& manifest, const std::filesystem::path& cache_root, const FeatureKind& kind,
                           int max_length) {
    manifest.require_trainable();
    return {load_split(manifest, cache_root, kind, Split::train, max_length),
            load_split(manifest, cache_root, kind, Split::dev, max_length), kind, max_length};
  }
};

// Tracks the monitored value and decides when to stop: after `patience`
// consecutive epochs without strict improvement. NaN never improves.
class EarlyStopping {
 public:
  EarlyStopping(int patience, bool maximize) : patience_(patience), maximize_(maximize) {}

  // Records one epoch; returns true when training should stop.
  bool update(int epoch, double value) {
    const bool better = !std::isnan(value) && (best_epoch_ == 0 || std::isnan(best_value_) ||
                                               (maximize_ ? value > best_value_ : value < best_value_));
    improved_ = better || best_epoch_ == 0;
    if (improved_) {
      best_epoch_ = epoch;
      best_value_ = value;
      since_best_ = 0;
    } else {
      ++since_best_;
    }
    return since_best_ >= patience_;
  }

  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_value_; }

 private:
  int patience_;
  bool maximize_;
  int best_epoch_ = 0;
  double best_value_ = std::numeric_limits<double>::quiet_NaN();
  int since_best_ = 0;
  bool improved_ = false;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochRecord> history;
  int stopped_epoch = 0;
  int best_epoch = 0;
};

// Spearman rho that reports NaN instead of throwing on degenerate input.
inline double safe_spearman(std::span<const double> x, std::span<const double> y) {
  try {
    return spearman(x, y);
  } catch (const ArithmeticError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

template <typename T>
std::vector<double> predict_split(const Regressor<T>& model, const SplitData& data, int max_length,
                                  int chunk = 256) {
  std::vector<double> out;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    rows.clear();
    for (std::size_t r = start; r < std::min(data.size(), start + chunk); ++r) rows.push_back(r);
    const auto pred = model.predict(make_batch(data, rows, max_length, std::nullopt));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

// Callbacks may run concurrently from train_all's worker threads.
using EpochCallback = std::function<void(const TrainSpec&, const EpochRecord&)>;

// Adam on per-emotion MSE with early stopping on the dev split. The returned
// checkpoint holds the weights of the best monitored epoch.
inline TrainResult train_one(const TrainingData& data, const TrainSpec& spec, const EpochCallback& on_epoch = {}) {
  spec.validate();
  if (data.train.size() == 0 || data.dev.size() == 0) throw ValidationError("train and dev splits must be non-empty");
  if (data.kind.name() != spec.feature_kind.name() || data.kind.dim != spec.feature_kind.dim)
    throw ConfigurationError("training data kind does not match the training spec");
  const int max_length = data.max_length;

  Regressor<float> model(spec.regressor_config());
  Adam<float> adam(model.params(), AdamOptions{spec.learning_rate});
  Random shuffler(spec.seed * 0x2545F4914F6CDD1DULL + 1);
  EarlyStopping stopper(spec.patience, spec.monitor == Monitor::dev_spearman);
  const std::vector<double> dev_targets = data.dev.targets_for(spec.emotion);

  TrainResult result;
  Parameters<float> best = model.params();
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    shuffler.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += spec.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
      const PaddedBatch batch =
          make_batch(data.train, std::span<const std::size_t>(order).subspan(start, end - start), max_length,
                     spec.emotion);
      Parameters<float> grad = model.params().zeros_like();
      const double loss = model.loss_and_gradient(batch, grad, Mode::train);
      if (!std::isfinite(loss))
        throw TrainingError(std::string(spec.emotion.name()) + ": non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      adam.step(model.params(), grad);
      loss_sum += loss * static_cast<double>(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    const auto dev_pred = predict_split(model, data.dev, max_length);
    rec.dev_rho = safe_spearman(dev_targets, dev_pred);
    double se = 0.0;
    for (std::size_t i = 0; i < dev_pred.size(); ++i) se += (dev_pred[i] - dev_targets[i]) * (dev_pred[i] - dev_targets[i]);
    rec.dev_loss = se / static_cast<double>(dev_pred.size());
    result.history.push_back(rec);
    if (on_epoch) on_epoch(spec, rec);

    const bool stop = stopper.update(epoch, spec.monitor == Monitor::dev_spearman ? rec.dev_rho : rec.dev_loss);
    if (stopper.improved()) best = model.params();
    result.stopped_epoch = epoch;
    if (stop) break;
  }

  result.best_epoch = stopper.best_epoch();
  result.checkpoint = ModelCheckpoint{spec.regressor_config(), spec.emotion, spec.feature_kind, std::move(best),
                                      result.history};
  return result;
}

inline TrainResult train_one(const Manifest& manifest, const std::filesystem::path& cache_root, const TrainSpec& spec,
                             const EpochCallback& on_epoch = {}) {
  const auto data = TrainingData::load(manifest, cache_root, spec.feature_kind, spec.padded_length());
  return train_one(data, spec, on_epoch);
}

struct TrainAllResult {
  std::map<EmotionId, TrainResult> results;
  std::map<EmotionId, std::string> failures;

  bool ok() const { return failures.empty(); }
};

using ResultCallback = std::function<void(const TrainSpec&, const TrainResult&)>;

// Trains the nine emotions independently; emotion k uses seed base.seed + k.
// Jobs run on up to `workers` threads (0 = hardware concurrency).
// `on_result` is called under a lock as each job finishes.
inline TrainAllResult train_all(const TrainingData& data, const TrainSpec& base,
                                std::vector<EmotionId> order = {}, unsigned workers = 0,
                                const EpochCallback& on_epoch = {}, const ResultCallback& on_result = {}) {
  if (order.empty()) order.assign(all_emotions().begin(), all_emotions().end());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(order.size()));

  TrainAllResult out;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < order.size(); k = next++) {
      TrainSpec spec = base;
      spec.emotion = order[k];
      spec.seed = base.seed + order[k].index();
      try {
        TrainResult r = train_one(data, spec, on_epoch);
        std::lock_guard lock(mu);
        if (on_result) on_result(spec, r);
        out.results.emplace(order[k], std::move(r));
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        out.failures.emplace(order[k], e.what());
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  return out;
}

}  // namespace emoshare
