#include <gtest/gtest.h>

#include "emoshare/evaluation.hpp"
#include "emoshare/report.hpp"
#include "support.hpp"

using namespace emoshare;
using namespace testing_support;

namespace {

// Reference dev-set rows for one feature kind, both architectures.
constexpr EmotionValues kHubertLargeArch1 = {0.450, 0.566, 0.583, 0.538, 0.539, 0.485, 0.427, 0.505, 0.560};
constexpr EmotionValues kHubertLargeArch2 = {0.467, 0.575, 0.587, 0.542, 0.547, 0.476, 0.426, 0.518, 0.557};

std::vector<double> random_vector(Random& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.below(4)) : rng.normal();
  return v;
}

}  // namespace

TEST(Spearman, PerfectMonotoneAndAntiMonotone) {
  const std::vector<double> x = {0.1, 0.5, 0.2, 0.9, 0.3};
  std::vector<double> y;
  for (double v : x) y.push_back(std::exp(3 * v));
  EXPECT_DOUBLE_EQ(spearman(x, y), 1.0);
  std::vector<double> r;
  for (double v : x) r.push_back(-v);
  EXPECT_DOUBLE_EQ(spearman(x, r), -1.0);
}

TEST(Spearman, TiedExampleMatchesOracle) {
  const std::vector<double> x = {1, 2, 2, 3}, y = {1, 3, 2, 4};
  EXPECT_EQ(enumerated_ranks(x), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_NEAR(spearman(x, y), oracle_spearman(x, y), 1e-12);
  // ranks x: 1,2.5,2.5,4 ; y: 1,3,2,4 -> cov 4.5 / sqrt(4.5 * 5)
  EXPECT_NEAR(spearman(x, y), 4.5 / std::sqrt(4.5 * 5.0), 1e-12);
}

TEST(Spearman, MatchesOracleOnRandomVectors) {
  Random rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    const bool ties = trial % 2 == 1;
    auto x = random_vector(rng, n, ties), y = random_vector(rng, n, ties);
    x[0] = 0.0, x[1] = 1.0, y[0] = 1.0, y[1] = 0.0;  // never constant
    EXPECT_NEAR(spearman(x, y), oracle_spearman(x, y), 1e-12);
  }
}

TEST(Spearman, RankInvarianceAndSymmetry) {
  Random rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.below(20);
    auto x = random_vector(rng, n, trial % 3 == 0), y = random_vector(rng, n, trial % 3 == 0);
    x[0] = -1.0, x[1] = 2.0, y[0] = 2.0, y[1] = -1.0;
    const double a = 0.5 + rng.uniform(), b = rng.normal();
    std::vector<double> fx, gy;
    for (double v : x) fx.push_back(std::exp(a * v) + b);
    for (double v : y) gy.push_back(v * v * v + a * v);
    EXPECT_EQ(spearman(fx, gy), spearman(x, y));
    EXPECT_EQ(spearman(y, x), spearman(x, y));
    const double r = spearman(x, y);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Spearman, DegenerateInputs) {
  const std::vector<double> c = {0.3, 0.3, 0.3}, v = {1, 2, 3};
  EXPECT_THROW(spearman(c, v), ArithmeticError);
  EXPECT_THROW(spearman(v, c), ArithmeticError);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{2}), InputError);
  EXPECT_THROW(spearman(v, std::vector<double>{1, 2}), InputError);
}

TEST(PercentChange, ReferenceExamples) {
  EXPECT_EQ(signed1(percent_change(0.523, 0.500)), "+4.6");
  EXPECT_NEAR(percent_change(0.523, 0.500), 4.6, 1e-9);
  EXPECT_DOUBLE_EQ(percent_change(0.5, 0.5), 0.0);
  EXPECT_NEAR(percent_change(0.425, 0.500), -15.0, 1e-9);
  EXPECT_EQ(signed1(percent_change(0.425, 0.500)), "-15.0");
  EXPECT_THROW(percent_change(0.4, 0.0), ArithmeticError);
}

TEST(Baseline, FixtureAverage) {
  const BaselineTable t = BaselineTable::load(EMOSHARE_BASELINE_FIXTURE);
  EXPECT_DOUBLE_EQ(t.rho[0], 0.428);
  EXPECT_DOUBLE_EQ(t.rho[8], 0.55);
  EXPECT_NEAR(t.average(), 0.500, 0.0005);
  EXPECT_NEAR(t.average(), 4.497 / 9.0, 1e-12);
}

TEST(Baseline, RejectsIncompleteTables) {
  EXPECT_THROW(BaselineTable::from_json(nlohmann::json::parse(R"({"rho": {"Anger": 0.4}})")), ValidationError);
  EXPECT_THROW(BaselineTable::from_json(nlohmann::json::parse(
                   R"({"rho": {"Anger":0,"Boredom":0,"Calmness":0,"Concentration":0,"Determination":0,
                               "Excitement":0,"Interest":0,"Sadness":0,"Joy":0}})")),
               ValidationError);
}

TEST(Report, AverageOfReferenceRow) {
  const auto r = EvaluationReport::from_values(kHubertLargeArch2);
  EXPECT_NEAR(r.average_rho, 0.522, 0.001);
  EXPECT_NEAR(r.average_rho, 4.695 / 9.0, 1e-12);
}

TEST(Report, BestPerEmotionSummaryRow) {
  const auto best = best_per_emotion({kHubertLargeArch1, kHubertLargeArch2});
  EXPECT_NEAR(mean_of(best), 4.708 / 9.0, 1e-12);
  const BaselineTable baseline = BaselineTable::load(EMOSHARE_BASELINE_FIXTURE);
  EvaluationReport a1 = EvaluationReport::from_values(kHubertLargeArch1);
  EvaluationReport a2 = EvaluationReport::from_values(kHubertLargeArch2);
  a1.feature_kind = a2.feature_kind = FeatureKind::parse("hubert-large");
  a2.architecture = Architecture::arch2;
  const auto rows = summarize({a1, a2}, baseline, Aggregation::best_per_emotion);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(fixed3(rows[0].average_rho), "0.523");
  EXPECT_EQ(fixed3(rows[0].baseline_average), "0.500");
  EXPECT_EQ(signed1(rows[0].percent_change), "+4.6");
  // Unrounded means would give +4.7; the row uses the printed averages.
  EXPECT_EQ(signed1(percent_change(rows[0].average_rho, rows[0].baseline_average)), "+4.7");
  const auto per_arch = summarize({a1, a2}, baseline, Aggregation::per_arch);
  ASSERT_EQ(per_arch.size(), 2u);
  EXPECT_EQ(per_arch[1].model, "arch2");
  EXPECT_EQ(fixed3(per_arch[1].average_rho), "0.522");
}

TEST(Report, JsonRoundTrip) {
  EvaluationReport r = EvaluationReport::from_values(kHubertLargeArch1);
  r.n_samples = 42;
  r.split = Split::dev;
  r.feature_kind = FeatureKind::mfcc();
  r.architecture = Architecture::arch2;
  const auto back = evaluation_report_from_json(to_json(r));
  EXPECT_EQ(back.per_emotion_rho, r.per_emotion_rho);
  EXPECT_EQ(back.average_rho, r.average_rho);
  EXPECT_EQ(back.n_samples, 42);
  EXPECT_EQ(back.feature_kind, r.feature_kind);
  EXPECT_EQ(back.architecture, Architecture::arch2);
  EXPECT_THROW(evaluation_report_from_json(nlohmann::json::object()), FormatError);
}

TEST(Predictions, CsvRoundTrip) {
  TempDir dir;
  std::vector<PredictionRow> rows = {{"a", EmotionId(0), 0.25, -0.125}, {"b", EmotionId(8), 1.0, 0.1 + 0.2}};
  write_predictions_csv(rows, dir / "p.csv");
  const auto back = read_predictions_csv(dir / "p.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].emotion, EmotionId(8));
  EXPECT_EQ(back[1].predicted_share, 0.1 + 0.2);
  EXPECT_EQ(back[0].id, "a");
}

namespace {

struct Trained {
  TempDir dir;
  SyntheticCorpus corpus;
  std::map<EmotionId, ModelCheckpoint> checkpoints;
  Trained() : corpus(generate_synthetic(16, 4, SyntheticMode::feature, dir.path())) {
    TrainSpec s;
    s.feature_kind = FeatureKind::synthetic();
    s.batch_size = 8;
    s.learning_rate = 3e-3;
    s.max_epochs = 3;
    s.patience = 2;
    s.model.conv_channels = 6;
    s.model.lstm_hidden = 4;
    s.model.ffnn_hidden = 4;
    const auto data = TrainingData::load(corpus.manifest, corpus.cache_root, s.feature_kind, 200);
    for (auto& [e, r] : train_all(data, s, {}, 1).results) checkpoints.emplace(e, r.checkpoint);
  }
};

}  // namespace

TEST(Evaluate, ScoresEverySplitSampleAndEmotion) {
  Trained t;
  const auto ev = evaluate(t.checkpoints, t.corpus.manifest, t.corpus.cache_root, Split::dev);
  EXPECT_EQ(ev.report.n_samples, 4);
  EXPECT_EQ(ev.predictions.size(), 4u * 9u);
  EXPECT_NEAR(ev.report.average_rho, mean_of(ev.report.per_emotion_rho), 1e-12);
  for (auto e : all_emotions()) {
    std::vector<double> truth, pred;
    for (const auto& p : ev.predictions)
      if (p.emotion == e) truth.push_back(p.true_share), pred.push_back(p.predicted_share);
    EXPECT_DOUBLE_EQ(ev.report.per_emotion_rho[e.index()], spearman(truth, pred));
    // Identical predictions and targets would score exactly 1.
    EXPECT_DOUBLE_EQ(spearman(truth, truth), 1.0);
  }
  const auto train = evaluate(t.checkpoints, t.corpus.manifest, t.corpus.cache_root, Split::train);
  EXPECT_EQ(train.report.n_samples, 12);
}

TEST(Evaluate, Errors) {
  Trained t;
  auto partial = t.checkpoints;
  partial.erase(EmotionId(5));
  try {
    evaluate(partial, t.corpus.manifest, t.corpus.cache_root, Split::dev);
    FAIL();
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("Excitement"), std::string::npos);
  }
  EXPECT_THROW(evaluate(t.checkpoints, t.corpus.manifest, t.corpus.cache_root, Split::test), InputError);
}
