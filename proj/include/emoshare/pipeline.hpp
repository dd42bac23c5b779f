#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "emoshare/batching.hpp"
#include "emoshare/cache.hpp"
#include "emoshare/checkpoint.hpp"
#include "emoshare/corpus.hpp"
#include "emoshare/embedding.hpp"
#include "emoshare/evaluation.hpp"
#include "emoshare/features.hpp"
#include "emoshare/plot.hpp"
#include "emoshare/report.hpp"
#include "emoshare/training.hpp"
#include "emoshare/wav.hpp"

namespace emoshare {

// Everything a CLI invocation needs. Defaults mirror TrainSpec/RegressorConfig.
struct RunConfig {
  std::filesystem::path manifest = "data/manifest.csv";
  std::filesystem::path cache_root;  // empty: <manifest dir>/cache
  std::filesystem::path run_root = "runs";
  std::filesystem::path out;         // prepare: corpus dir; report: output dir
  std::vector<std::string> kinds = {"melfb40"};
  std::vector<std::string> archs = {"arch1", "arch2"};
  std::uint64_t seed = 0;

  int synthetic = 0;  // > 0: prepare generates this many utterances
  std::string synthetic_mode = "feature";
  int synthetic_dim = FeatureKind::kDefaultSyntheticDim;
  double synthetic_period_ms = FeatureKind::kDefaultSyntheticPeriodMs;
  int mfcc_dim = FeatureKind::kDefaultMfccDim;

  int batch_size = 128;
  double learning_rate = 1e-4;
  int max_epochs = 100;
  int patience = 10;
  std::string monitor = "dev_spearman";
  int conv_channels = 256;
  int lstm_hidden = 128;
  int ffnn_hidden = 64;
  double dropout = 0.2;
  std::string attention_scale = "linear_Wl";
  int max_length = 0;
  unsigned workers = 0;

  std::string split = "dev";
  std::string aggregation = "best_per_emotion";
  std::filesystem::path baseline;

  std::map<std::string, std::string> embedding_commands;
  int embedding_layer = -1;

  std::filesystem::path resolved_cache_root() const {
    return cache_root.empty() ? manifest.parent_path() / "cache" : cache_root;
  }

  FeatureKind kind(const std::string& name) const {
    if (name == "mfcc") return FeatureKind::mfcc(mfcc_dim);
    if (name == "synthetic") return FeatureKind::synthetic(synthetic_dim, synthetic_period_ms);
    return FeatureKind::parse(name);
  }

  void validate() const {
    if (kinds.empty()) throw ConfigurationError("no feature kinds selected");
    if (archs.empty()) throw ConfigurationError("no architectures selected");
    for (const auto& k : kinds) kind(k);
    for (const auto& a : archs) parse_architecture(a);
    parse_monitor(monitor);
    parse_attention_scale(attention_scale);
    parse_split(split);
    parse_aggregation(aggregation);
  }

  TrainSpec train_spec(const std::string& kind_name, const std::string& arch) const {
    TrainSpec s;
    s.feature_kind = kind(kind_name);
    s.architecture = parse_architecture(arch);
    s.batch_size = batch_size;
    s.learning_rate = learning_rate;
    s.max_epochs = max_epochs;
    s.patience = patience;
    s.seed = seed;
    s.monitor = parse_monitor(monitor);
    s.model.conv_channels = conv_channels;
    s.model.lstm_hidden = lstm_hidden;
    s.model.ffnn_hidden = ffnn_hidden;
    s.model.dropout = dropout;
    s.model.attention_scale = parse_attention_scale(attention_scale);
    s.max_length = max_length;
    return s;
  }

  std::filesystem::path run_dir(const std::string& kind_name, const std::string& arch) const {
    return run_root / kind(kind_name).name() / arch;
  }
};

// Exclusive marker file in the run root; a second writer fails fast.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_root) : path_(run_root / ".lock") {
    std::filesystem::create_directories(run_root);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw IoError("run root is locked by another process (remove " + path_.string() + " if stale)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
  if (!os) throw IoError("failed writing " + p.string());
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

inline Manifest cmd_prepare(const RunConfig& cfg, std::ostream& log) {
  if (cfg.synthetic > 0) {
    const auto out = cfg.out.empty() ? cfg.manifest.parent_path() : cfg.out;
    SyntheticMode mode;
    if (cfg.synthetic_mode == "feature") mode = SyntheticMode::feature;
    else if (cfg.synthetic_mode == "waveform") mode = SyntheticMode::waveform;
    else throw ConfigurationError("synthetic mode must be 'feature' or 'waveform'");
    SyntheticOptions opt;
    opt.feature_dim = cfg.synthetic_dim;
    opt.frame_period_ms = cfg.synthetic_period_ms;
    auto corpus = generate_synthetic(cfg.synthetic, cfg.seed, mode, out, opt);
    log << "wrote " << corpus.manifest.utterances.size() << " synthetic utterances to "
        << corpus.manifest_path.string() << '\n';
    return corpus.manifest;
  }
  Manifest m = load_manifest(cfg.manifest, true);
  log << "manifest ok: " << m.split(Split::train).size() << " train, " << m.split(Split::dev).size() << " dev, "
      << m.split(Split::test).size() << " test\n";
  return m;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

struct FeaturesSummary {
  int computed = 0;
  int skipped = 0;
  std::vector<std::string> failures;
};

inline EmbeddingRegistry make_registry(const RunConfig& cfg) {
  EmbeddingRegistry reg;
  for (const auto& [name, command] : cfg.embedding_commands) {
    const FeatureKind k = FeatureKind::parse(name);
    if (!k.is_pretrained()) throw ConfigurationError("embedding command given for non-pretrained kind " + name);
    reg.add(std::make_unique<ExternalCommandProvider>(k, command, cfg.resolved_cache_root() / ".scratch" / name,
                                                      cfg.embedding_layer));
  }
  return reg;
}

inline FeatureSequence compute_features(const FeatureKind& kind, const Waveform& wav, const std::string& id,
                                        const EmbeddingRegistry& registry) {
  switch (kind.source) {
    case FeatureSource::melfb40: return mel_filterbank(wav, {}, id);
    case FeatureSource::mfcc: return mfcc(wav, kind.dim, {}, id);
    case FeatureSource::synthetic:
      throw ConfigurationError("synthetic features come from 'prepare --synthetic-mode feature', not from audio");
    default: return extract_embeddings(wav, kind.name(), registry, id);
  }
}

// Fills <cache_root>/<kind>/<split>/ and writes <cache_root>/<kind>/lengths.json.
// Files newer than their audio are kept. Failures are collected, not fatal.
inline FeaturesSummary cmd_features(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Manifest m = load_manifest(cfg.manifest);
  const auto root = cfg.resolved_cache_root();
  const EmbeddingRegistry registry = make_registry(cfg);
  FeaturesSummary summary;
  std::mutex mu;

  for (const auto& name : cfg.kinds) {
    const FeatureKind kind = cfg.kind(name);
    LengthDictionary lengths;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < m.utterances.size(); i = next++) {
        const Utterance& u = m.utterances[i];
        const auto dir = cache_dir(root, kind, to_string(u.split));
        const auto path = cache_path(dir, u.id);
        try {
          const auto audio = m.resolve(u);
          std::error_code ec;
          const bool fresh = std::filesystem::exists(path) &&
                             (!std::filesystem::exists(audio) || audio == path ||
                              std::filesystem::last_write_time(path, ec) >= std::filesystem::last_write_time(audio, ec));
          int frames = 0;
          bool computed = false;
          if (fresh) {
            frames = read_cache_file(path, kind).true_length();
          } else {
            const Waveform wav = read_wav(audio);
            const FeatureSequence seq = compute_features(kind, wav, u.id, registry);
            write_cache(seq, dir);
            frames = seq.true_length();
            computed = true;
          }
          std::lock_guard lock(mu);
          lengths.set(u.id, frames);
          (computed ? summary.computed : summary.skipped)++;
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          summary.failures.push_back(kind.name() + "/" + u.id + ": " + e.what());
        }
      }
    };
    const unsigned workers =
        kind.is_pretrained() && !(registry.contains(kind.name()) && registry.get(kind.name()).shareable())
            ? 1u
            : (cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency()));
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
      work();
    }
    std::filesystem::create_directories(root / kind.name());
    lengths.save(root / kind.name() / "lengths.json");
    log << kind.name() << ": " << lengths.size() << " utterances, max length " << lengths.max_length() << " frames\n";
  }
  log << "features: " << summary.computed << " computed, " << summary.skipped << " up to date, "
      << summary.failures.size() << " failed\n";
  if (!summary.failures.empty()) {
    std::string msg = std::to_string(summary.failures.size()) + " feature extraction(s) failed:";
    for (const auto& f : summary.failures) msg += "\n  " + f;
    throw ExtractionError(msg);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,dev_rho\n";
  for (const auto& r : history)
    os << r.epoch << ',' << detail::format_double(r.train_loss) << ','
       << (std::isnan(r.dev_rho) ? std::string("nan") : detail::format_double(r.dev_rho)) << '\n';
  return os.str();
}

struct TrainSummary {
  int trained = 0;
  int skipped = 0;
};

inline bool run_complete(const std::filesystem::path& dir, const TrainSpec& spec) {
  const auto spec_path = dir / "spec.json";
  if (!std::filesystem::exists(dir / "checkpoint.emck") || !std::filesystem::exists(spec_path)) return false;
  const auto stored = nlohmann::json::parse(read_text(spec_path), nullptr, false);
  return !stored.is_discarded() && stored == to_json(spec);
}

// Trains every (kind, architecture, emotion) not already complete under
// runs/<kind>/<arch>/<emotion>/. spec.json is written last and marks a
// finished job, so an interrupted sweep resumes where it stopped.
inline TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  RunLock lock(cfg.run_root);
  const Manifest m = load_manifest(cfg.manifest);
  TrainSummary summary;
  std::vector<std::string> failures;
  std::mutex log_mu;

  for (const auto& kind_name : cfg.kinds) {
    std::optional<TrainingData> data;
    for (const auto& arch : cfg.archs) {
      const TrainSpec base = cfg.train_spec(kind_name, arch);
      base.validate();
      std::vector<EmotionId> pending;
      for (auto e : all_emotions()) {
        TrainSpec s = base;
        s.emotion = e;
        s.seed = base.seed + e.index();
        if (run_complete(cfg.run_dir(kind_name, arch) / e.key(), s)) ++summary.skipped;
        else pending.push_back(e);
      }
      if (pending.empty()) {
        log << base.feature_kind.name() << "/" << arch << ": all emotions already trained\n";
        continue;
      }
      if (!data) data = TrainingData::load(m, cfg.resolved_cache_root(), base.feature_kind, base.padded_length());

      auto on_result = [&](const TrainSpec& s, const TrainResult& r) {
        const auto dir = cfg.run_dir(kind_name, arch) / s.emotion.key();
        std::filesystem::create_directories(dir);
        std::filesystem::remove(dir / "spec.json");
        save_checkpoint(r.checkpoint, dir / "checkpoint.emck");
        write_text(dir / "history.csv", history_csv(r.history));
        write_text(dir / "spec.json", to_json(s).dump(2) + "\n");
        std::lock_guard l(log_mu);
        log << s.feature_kind.name() << "/" << arch << "/" << s.emotion.key() << ": best epoch " << r.best_epoch
            << " of " << r.stopped_epoch << ", dev rho "
            << r.history.at(static_cast<std::size_t>(r.best_epoch - 1)).dev_rho << '\n';
      };
      const auto result = train_all(*data, base, pending, cfg.workers, {}, on_result);
      summary.trained += static_cast<int>(result.results.size());
      for (const auto& [e, msg] : result.failures)
        failures.push_back(base.feature_kind.name() + "/" + arch + "/" + e.key() + ": " + msg);
    }
  }
  if (!failures.empty()) {
    std::string msg = "training failed for:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw TrainingError(msg);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

inline std::string evaluation_file(Split split) { return "evaluation_" + to_string(split) + ".json"; }
inline std::string predictions_file(Split split) { return "predictions_" + to_string(split) + ".csv"; }

inline std::map<EmotionId, ModelCheckpoint> load_run_checkpoints(const std::filesystem::path& run_dir) {
  std::map<EmotionId, ModelCheckpoint> out;
  std::vector<std::string> missing;
  for (auto e : all_emotions()) {
    const auto p = run_dir / e.key() / "checkpoint.emck";
    if (!std::filesystem::exists(p)) missing.push_back(e.key());
    else out.emplace(e, load_checkpoint(p));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += " " + s;
    throw ConfigurationError("missing checkpoints in " + run_dir.string() + ":" + list);
  }
  return out;
}

inline std::vector<EvaluationReport> cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Manifest m = load_manifest(cfg.manifest);
  const Split split = parse_split(cfg.split);
  std::vector<EvaluationReport> reports;
  for (const auto& kind_name : cfg.kinds)
    for (const auto& arch : cfg.archs) {
      const auto dir = cfg.run_dir(kind_name, arch);
      const auto checkpoints = load_run_checkpoints(dir);
      const int max_length = cfg.train_spec(kind_name, arch).padded_length();
      const Evaluation ev = evaluate(checkpoints, m, cfg.resolved_cache_root(), split, max_length);
      write_text(dir / evaluation_file(split), to_json(ev.report).dump(2) + "\n");
      write_predictions_csv(ev.predictions, dir / predictions_file(split));
      log << ev.report.feature_kind.name() << "/" << arch << ": average rho " << fixed3(ev.report.average_rho)
          << " over " << ev.report.n_samples << " " << to_string(split) << " utterances\n";
      reports.push_back(ev.report);
    }
  return reports;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOutput {
  std::filesystem::path dir;
  std::vector<EvaluationReport> cells;
  std::vector<SummaryRow> summary;
  std::string scatter_source;                 // "<kind>/<arch>" plotted in the scatter files
  std::map<EmotionId, int> scatter_points;
  std::vector<std::vector<plot::BarChart::Bar>> bars;
};

inline ReportOutput cmd_report(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Split split = parse_split(cfg.split);
  ReportOutput out;
  out.dir = cfg.out.empty() ? cfg.run_root / "report" : cfg.out;

  std::vector<std::string> missing;
  std::vector<std::filesystem::path> cell_dirs;
  for (const auto& kind_name : cfg.kinds)
    for (const auto& arch : cfg.archs) {
      const auto dir = cfg.run_dir(kind_name, arch);
      const auto file = dir / evaluation_file(split);
      if (!std::filesystem::exists(file) || !std::filesystem::exists(dir / predictions_file(split))) {
        missing.push_back(cfg.kind(kind_name).name() + "/" + arch);
        continue;
      }
      const auto j = nlohmann::json::parse(read_text(file), nullptr, false);
      if (j.is_discarded()) throw FormatError(file.string() + ": malformed JSON");
      out.cells.push_back(evaluation_report_from_json(j));
      cell_dirs.push_back(dir);
    }
  if (!missing.empty()) {
    std::string msg = "missing " + to_string(split) + " evaluations (run 'evaluate' first):";
    for (const auto& s : missing) msg += " " + s;
    throw ValidationError(msg);
  }
  if (cfg.baseline.empty()) throw ConfigurationError("no baseline table configured");
  const BaselineTable baseline = BaselineTable::load(cfg.baseline);
  const Aggregation rule = parse_aggregation(cfg.aggregation);

  std::filesystem::create_directories(out.dir);
  const TextTable grid = rho_grid(out.cells, &baseline);
  write_text(out.dir / "rho_grid.csv", grid.csv());
  write_text(out.dir / "rho_grid.txt", grid.aligned());
  out.summary = summarize(out.cells, baseline, rule);
  const TextTable summary = summary_table(out.summary, rule);
  write_text(out.dir / "summary.csv", summary.csv());
  write_text(out.dir / "summary.txt", summary.aligned());

  // Scatter plots come from the cell with the highest average rho.
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.cells.size(); ++i)
    if (out.cells[i].average_rho > out.cells[best].average_rho) best = i;
  out.scatter_source = out.cells[best].feature_kind.name() + "/" + to_string(out.cells[best].architecture);
  const auto predictions = read_predictions_csv(cell_dirs[best] / predictions_file(split));
  for (auto e : all_emotions()) {
    plot::ScatterPlot sp;
    sp.title = std::string(e.name()) + " " + out.scatter_source + " " + to_string(split);
    for (const auto& r : predictions)
      if (r.emotion == e) {
        sp.truth.push_back(r.true_share);
        sp.predicted.push_back(r.predicted_share);
      }
    const auto rendered = sp.render();
    rendered.canvas.save_png(out.dir / ("scatter_" + e.key() + ".png"));
    out.scatter_points[e] = rendered.points_drawn;
  }

  plot::BarChart chart;
  chart.title = "AVERAGE RHO BY FEATURES";
  chart.series = cfg.archs;
  for (const auto& kind_name : cfg.kinds) {
    chart.groups.push_back(cfg.kind(kind_name).name());
    std::vector<double> row;
    for (const auto& arch : cfg.archs)
      for (const auto& c : out.cells)
        if (c.feature_kind.name() == cfg.kind(kind_name).name() && to_string(c.architecture) == arch)
          row.push_back(c.average_rho);
    chart.values.push_back(row);
  }
  const auto rendered = chart.render();
  rendered.canvas.save_png(out.dir / "arch_compare.png");
  out.bars = rendered.bars;

  log << summary.aligned() << "scatter plots from " << out.scatter_source << "\nreport written to "
      << out.dir.string() << '\n';
  return out;
}

}  // namespace emoshare
