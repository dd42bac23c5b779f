#include <gtest/gtest.h>

#include "emoshare/training.hpp"
#include "support.hpp"

using namespace emoshare;
using testing_support::TempDir;

namespace {

TrainSpec tiny_spec(Architecture arch = Architecture::arch1) {
  TrainSpec s;
  s.feature_kind = FeatureKind::synthetic();
  s.architecture = arch;
  s.batch_size = 8;
  s.learning_rate = 3e-3;
  s.max_epochs = 6;
  s.patience = 3;
  s.seed = 11;
  s.model.conv_channels = 8;
  s.model.lstm_hidden = 6;
  s.model.ffnn_hidden = 5;
  return s;
}

struct Corpus {
  TempDir dir;
  SyntheticCorpus corpus;
  TrainingData data;
  explicit Corpus(int n, std::uint64_t seed = 1)
      : corpus(generate_synthetic(n, seed, SyntheticMode::feature, dir.path())),
        data(TrainingData::load(corpus.manifest, corpus.cache_root, FeatureKind::synthetic(), 200)) {}
};

}  // namespace

TEST(TrainSpec, DefaultsAndValidation) {
  TrainSpec s;
  EXPECT_EQ(s.batch_size, 128);
  EXPECT_DOUBLE_EQ(s.learning_rate, 1e-4);
  EXPECT_EQ(s.max_epochs, 100);
  EXPECT_EQ(s.patience, 10);
  EXPECT_EQ(s.monitor, Monitor::dev_spearman);
  EXPECT_NO_THROW(s.validate());
  s.patience = 100;
  EXPECT_THROW(s.validate(), ConfigurationError);
  s.patience = 10;
  s.batch_size = 0;
  EXPECT_THROW(s.validate(), ConfigurationError);
  s.batch_size = 1;
  s.learning_rate = 0;
  EXPECT_THROW(s.validate(), ConfigurationError);
  EXPECT_EQ(tiny_spec().padded_length(), 200);
}

TEST(EarlyStopping, StopsAfterPatienceWithoutImprovement) {
  EarlyStopping e(1, true);
  EXPECT_FALSE(e.update(1, 0.5));
  EXPECT_TRUE(e.update(2, 0.5));  // equal is not an improvement
  EXPECT_EQ(e.best_epoch(), 1);

  EarlyStopping loss(2, false);
  EXPECT_FALSE(loss.update(1, 1.0));
  EXPECT_FALSE(loss.update(2, 0.5));
  EXPECT_FALSE(loss.update(3, 0.7));
  EXPECT_TRUE(loss.update(4, 0.6));
  EXPECT_EQ(loss.best_epoch(), 2);
}

TEST(EarlyStopping, NanNeverImproves) {
  EarlyStopping e(3, true);
  e.update(1, std::nan(""));
  e.update(2, 0.1);
  EXPECT_EQ(e.best_epoch(), 2);
  e.update(3, std::nan(""));
  EXPECT_EQ(e.best_epoch(), 2);
}

TEST(TrainOne, PatienceOneStopsAtEpochTwoWhenFlat) {
  Corpus c(16);
  TrainSpec s = tiny_spec();
  s.patience = 1;
  s.monitor = Monitor::dev_loss;
  s.learning_rate = 1e-30;  // weights never move, so dev loss never strictly improves
  const auto r = train_one(c.data, s);
  EXPECT_EQ(r.stopped_epoch, 2);
  EXPECT_EQ(r.best_epoch, 1);
  EXPECT_EQ(r.history.size(), 2u);
}

TEST(TrainOne, BestCheckpointIsTheBestMonitoredEpoch) {
  Corpus c(24);
  for (auto monitor : {Monitor::dev_spearman, Monitor::dev_loss}) {
    TrainSpec s = tiny_spec();
    s.monitor = monitor;
    s.max_epochs = 12;
    s.patience = 4;
    const auto r = train_one(c.data, s);
    ASSERT_GE(r.stopped_epoch, r.best_epoch);
    ASSERT_EQ(r.history.size(), static_cast<std::size_t>(r.stopped_epoch));
    const auto& best = r.history[r.best_epoch - 1];
    for (const auto& h : r.history) {
      if (monitor == Monitor::dev_spearman && !std::isnan(h.dev_rho)) EXPECT_GE(best.dev_rho, h.dev_rho);
      if (monitor == Monitor::dev_loss) EXPECT_LE(best.dev_loss, h.dev_loss);
    }
    // The checkpoint reproduces the best epoch's dev numbers.
    const Regressor<float> m(r.checkpoint.config, r.checkpoint.weights);
    const auto pred = predict_split(m, c.data.dev, c.data.max_length);
    const auto truth = c.data.dev.targets_for(s.emotion);
    if (!std::isnan(best.dev_rho)) EXPECT_DOUBLE_EQ(spearman(truth, pred), best.dev_rho);
    EXPECT_EQ(r.checkpoint.train_history, r.history);
  }
}

TEST(TrainOne, DeterministicGivenSeed) {
  Corpus c(16);
  for (auto arch : {Architecture::arch1, Architecture::arch2}) {
    const auto a = train_one(c.data, tiny_spec(arch));
    const auto b = train_one(c.data, tiny_spec(arch));
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(a.checkpoint.weights.ffn1_w, b.checkpoint.weights.ffn1_w);
    TrainSpec other = tiny_spec(arch);
    other.seed = 12;
    EXPECT_NE(train_one(c.data, other).history, a.history);
  }
}

TEST(TrainOne, LossDecreasesWithDefaultSpec) {
  Corpus c(64);
  TrainSpec s;
  s.feature_kind = FeatureKind::synthetic();
  s.max_epochs = 10;
  s.patience = 9;
  s.seed = 1;
  const auto r = train_one(c.data, s);
  ASSERT_EQ(r.history.size(), 10u);
  EXPECT_LT(r.history[9].train_loss, r.history[0].train_loss);
}

TEST(TrainOne, MissingCacheListsIds) {
  Corpus c(8);
  std::filesystem::remove(cache_path(cache_dir(c.corpus.cache_root, FeatureKind::synthetic(), "train"), "syn0001"));
  std::filesystem::remove(cache_path(cache_dir(c.corpus.cache_root, FeatureKind::synthetic(), "dev"), "syn0003"));
  try {
    train_one(c.corpus.manifest, c.corpus.cache_root, tiny_spec());
    FAIL();
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("syn0001"), std::string::npos) << e.what();
  }
  try {
    load_split(c.corpus.manifest, c.corpus.cache_root, FeatureKind::synthetic(), Split::dev, 200);
    FAIL();
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("syn0003"), std::string::npos) << e.what();
  }
}

TEST(TrainOne, OverlongSequenceIsLengthError) {
  Corpus c(8);
  EXPECT_THROW(TrainingData::load(c.corpus.manifest, c.corpus.cache_root, FeatureKind::synthetic(), 10), LengthError);
}

TEST(TrainOne, NanLossReportsEpochAndBatch) {
  Corpus c(16);
  TrainingData data = c.data;
  for (auto& t : data.train.targets) (*t).values[0] = std::nan("");
  try {
    train_one(data, tiny_spec());
    FAIL();
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
  }
}

TEST(TrainOne, KindMismatchRejected) {
  Corpus c(8);
  TrainSpec s = tiny_spec();
  s.feature_kind = FeatureKind::melfb40();
  EXPECT_THROW(train_one(c.data, s), ConfigurationError);
}

TEST(TrainAll, NineTaggedResultsIndependentOfOrder) {
  Corpus c(16);
  TrainSpec base = tiny_spec();
  base.max_epochs = 3;
  base.patience = 2;
  const auto forward = train_all(c.data, base, {}, 1);
  ASSERT_TRUE(forward.ok());
  ASSERT_EQ(forward.results.size(), 9u);
  for (const auto& [e, r] : forward.results) {
    EXPECT_EQ(r.checkpoint.emotion, e);
    EXPECT_EQ(r.checkpoint.config.seed, base.seed + e.index());
  }

  std::vector<EmotionId> order(all_emotions().begin(), all_emotions().end());
  Random rng(99);
  rng.shuffle(std::span(order));
  const auto shuffled = train_all(c.data, base, order, 3);
  for (auto e : all_emotions()) {
    EXPECT_EQ(shuffled.results.at(e).history, forward.results.at(e).history) << e.name();
    EXPECT_EQ(shuffled.results.at(e).checkpoint.weights.conv_w, forward.results.at(e).checkpoint.weights.conv_w);
  }

  TrainSpec reseeded = base;
  reseeded.seed = base.seed + 100;
  const auto changed = train_all(c.data, reseeded, {}, 2);
  for (auto e : all_emotions())
    EXPECT_NE(changed.results.at(e).history, forward.results.at(e).history) << e.name();
}

TEST(TrainAll, FailuresAreReportedPerEmotion) {
  Corpus c(16);
  TrainingData data = c.data;
  for (auto& t : data.train.targets) (*t).values[EmotionId::parse("Sadness").index()] = std::nan("");
  TrainSpec base = tiny_spec();
  base.max_epochs = 2;
  base.patience = 1;
  int callbacks = 0;
  const auto r = train_all(data, base, {}, 2, {}, [&](const TrainSpec&, const TrainResult&) { ++callbacks; });
  EXPECT_FALSE(r.ok());
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures.begin()->first, EmotionId::parse("Sadness"));
  EXPECT_EQ(r.results.size(), 8u);
  EXPECT_EQ(callbacks, 8);
}
