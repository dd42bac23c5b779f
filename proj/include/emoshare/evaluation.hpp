#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "emoshare/checkpoint.hpp"
#include "emoshare/corpus.hpp"
#include "emoshare/emotion.hpp"
#include "emoshare/errors.hpp"
#include "emoshare/spearman.hpp"
#include "emoshare/training.hpp"

namespace emoshare {

using EmotionValues = std::array<double, kNumEmotions>;

inline double mean_of(const EmotionValues& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// 100 * (candidate - baseline) / baseline
inline double percent_change(double candidate_avg, double baseline_avg) {
  if (baseline_avg == 0.0) throw ArithmeticError("percent change against a zero baseline");
  return 100.0 * (candidate_avg - baseline_avg) / baseline_avg;
}

// Per-emotion reference correlations, e.g. the challenge baseline.
struct BaselineTable {
  std::string name;
  EmotionValues rho{};

  double average() const { return mean_of(rho); }

  static BaselineTable from_json(const nlohmann::json& j) {
    BaselineTable t;
    t.name = j.value("name", "baseline");
    const auto& values = j.at("rho");
    if (!values.is_object() || values.size() != kNumEmotions)
      throw ValidationError("baseline table needs exactly 9 emotion entries");
    for (const auto& [key, v] : values.items()) t.rho[EmotionId::parse(key).index()] = v.get<double>();
    return t;
  }

  static BaselineTable load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open baseline table " + path.string());
    const auto j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");
    return from_json(j);
  }
};

struct EvaluationReport {
  EmotionValues per_emotion_rho{};
  double average_rho = 0.0;
  int n_samples = 0;
  Split split = Split::dev;
  FeatureKind feature_kind;
  Architecture architecture = Architecture::arch1;

  static EvaluationReport from_values(const EmotionValues& rho) {
    EvaluationReport r;
    r.per_emotion_rho = rho;
    r.average_rho = mean_of(rho);
    return r;
  }
};

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (auto e : all_emotions()) per[std::string(e.name())] = r.per_emotion_rho[e.index()];
  return {{"feature_kind", r.feature_kind.name()},
          {"architecture", to_string(r.architecture)},
          {"split", to_string(r.split)},
          {"n_samples", r.n_samples},
          {"per_emotion_rho", per},
          {"average_rho", r.average_rho}};
}

inline EvaluationReport evaluation_report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  try {
    r.feature_kind = FeatureKind::parse(j.at("feature_kind").get<std::string>());
    r.architecture = parse_architecture(j.at("architecture").get<std::string>());
    r.split = parse_split(j.at("split").get<std::string>());
    r.n_samples = j.at("n_samples").get<int>();
    for (auto e : all_emotions()) r.per_emotion_rho[e.index()] = j.at("per_emotion_rho").at(std::string(e.name())).get<double>();
    r.average_rho = j.at("average_rho").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

struct PredictionRow {
  std::string id;
  EmotionId emotion;
  double true_share = 0.0;
  double predicted_share = 0.0;
};

inline void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "id,emotion,true_share,predicted_share\n";
  for (const auto& r : rows)
    os << r.id << ',' << r.emotion.key() << ',' << detail::format_double(r.true_share) << ','
       << detail::format_double(r.predicted_share) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

inline std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "id,emotion,true_share,predicted_share") throw FormatError(path.string() + ": unexpected header");
  std::vector<PredictionRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 4) throw FormatError(path.string() + ": malformed row");
    const auto t = detail::parse_double(f[2]);
    const auto p = detail::parse_double(f[3]);
    if (!t || !p) throw FormatError(path.string() + ": non-numeric share");
    rows.push_back({f[0], EmotionId::parse(f[1]), *t, *p});
  }
  return rows;
}

struct Evaluation {
  EvaluationReport report;
  std::vector<PredictionRow> predictions;
};

// Eval-mode predictions of each emotion's checkpoint over a labelled split.
inline Evaluation evaluate(const std::map<EmotionId, ModelCheckpoint>& checkpoints, const Manifest& manifest,
                           const std::filesystem::path& cache_root, Split split, int max_length = 0) {
  for (auto e : all_emotions())
    if (!checkpoints.count(e)) throw ConfigurationError("no checkpoint for emotion " + std::string(e.name()));
  const ModelCheckpoint& first = checkpoints.begin()->second;
  const FeatureKind kind = first.feature_kind;
  for (const auto& [e, ck] : checkpoints) {
    if (ck.emotion != e) throw ConfigurationError("checkpoint for " + std::string(e.name()) + " is tagged " +
                                                  std::string(ck.emotion.name()));
    if (ck.feature_kind.name() != kind.name() || ck.config.architecture != first.config.architecture)
      throw ConfigurationError("checkpoints mix feature kinds or architectures");
  }
  if (max_length <= 0) max_length = default_max_length(kind);
  const SplitData data = load_split(manifest, cache_root, kind, split, max_length);
  if (data.size() == 0) throw InputError("split " + to_string(split) + " has no labelled utterances");

  Evaluation out;
  out.report.split = split;
  out.report.feature_kind = kind;
  out.report.architecture = first.config.architecture;
  out.report.n_samples = static_cast<int>(data.size());
  for (auto e : all_emotions()) {
    const ModelCheckpoint& ck = checkpoints.at(e);
    const Regressor<float> model(ck.config, ck.weights);
    const auto pred = predict_split(model, data, max_length);
    const auto truth = data.targets_for(e);
    try {
      out.report.per_emotion_rho[e.index()] = spearman(truth, pred);
    } catch (const ArithmeticError& err) {
      throw ArithmeticError(std::string(e.name()) + ": " + err.what());
    }
    for (std::size_t i = 0; i < pred.size(); ++i)
      out.predictions.push_back({data.features[i].utterance_id, e, truth[i], pred[i]});
  }
  out.report.average_rho = mean_of(out.report.per_emotion_rho);
  return out;
}

enum class Aggregation { per_arch, best_per_emotion };

inline std::string to_string(Aggregation a) { return a == Aggregation::per_arch ? "per_arch" : "best_per_emotion"; }
inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "per_arch") return Aggregation::per_arch;
  if (s == "best_per_emotion") return Aggregation::best_per_emotion;
  throw ConfigurationError("unknown aggregation rule '" + std::string(s) + "'");
}

// Elementwise maximum across architectures, per emotion.
inline EmotionValues best_per_emotion(const std::vector<EmotionValues>& rows) {
  if (rows.empty()) throw InputError("no rows to aggregate");
  EmotionValues best = rows.front();
  for (const auto& r : rows)
    for (std::size_t k = 0; k < kNumEmotions; ++k) best[k] = std::max(best[k], r[k]);
  return best;
}

}  // namespace emoshare
