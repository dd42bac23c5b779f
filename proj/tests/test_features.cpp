#include <gtest/gtest.h>

#include <fstream>

#include "emoshare/cache.hpp"
#include "emoshare/embedding.hpp"
#include "emoshare/features.hpp"
#include "emoshare/wav.hpp"
#include "support.hpp"

using namespace emoshare;
using testing_support::TempDir;

namespace {

Waveform sine(double hz, double seconds, double amp = 0.5) {
  Waveform w;
  const auto n = static_cast<std::size_t>(seconds * 16000.0);
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(static_cast<float>(amp * std::sin(2 * M_PI * hz * i / 16000.0)));
  return w;
}

Waveform noise(std::uint64_t seed, std::size_t n) {
  Random rng(seed);
  Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(static_cast<float>(0.1 * rng.normal()));
  return w;
}

// Deterministic fake embedding model at the 20 ms rate.
class FakeModel final : public EmbeddingProvider {
 public:
  explicit FakeModel(FeatureKind k, bool fail = false) : kind_(k), fail_(fail) {}
  FeatureKind kind() const override { return kind_; }
  FeatureMatrix embed(const Waveform& wav) override {
    if (fail_) throw std::runtime_error("model crashed");
    const int t = ssl_frame_count(wav.samples.size());
    FeatureMatrix m(t, kind_.dim);
    for (int r = 0; r < t; ++r)
      for (int c = 0; c < kind_.dim; ++c) m(r, c) = wav.samples[static_cast<std::size_t>(r) * 320] + 0.001f * c;
    return m;
  }

 private:
  FeatureKind kind_;
  bool fail_;
};

}  // namespace

TEST(FeatureKind, FixedDimensions) {
  EXPECT_EQ(FeatureKind::parse("melfb40").dim, 40);
  EXPECT_EQ(FeatureKind::parse("mfcc").dim, 40);
  EXPECT_EQ(FeatureKind::parse("mfcc", 13).dim, 13);
  EXPECT_EQ(FeatureKind::parse("wav2vec2-base").dim, 768);
  EXPECT_EQ(FeatureKind::parse("hubert-base").dim, 768);
  EXPECT_EQ(FeatureKind::parse("wav2vec2-large").dim, 1024);
  EXPECT_EQ(FeatureKind::parse("hubert-large").dim, 1024);
  EXPECT_DOUBLE_EQ(FeatureKind::parse("hubert-large").frame_period_ms, 20.0);
  EXPECT_DOUBLE_EQ(FeatureKind::parse("melfb40").frame_period_ms, 10.0);
  EXPECT_THROW(FeatureKind::parse("melfb40", 13), ConfigurationError);
  EXPECT_THROW(FeatureKind::parse("whisper"), ConfigurationError);
  for (auto name : {"melfb40", "mfcc", "wav2vec2-base", "wav2vec2-large", "hubert-base", "hubert-large", "synthetic"})
    EXPECT_EQ(FeatureKind::parse(name).name(), name);
}

TEST(FeatureSequence, Validation) {
  FeatureSequence s{"x", FeatureMatrix::Zero(3, 8), FeatureKind::synthetic()};
  EXPECT_NO_THROW(s.validate());
  s.data(1, 2) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(s.validate(), ValidationError);
  FeatureSequence wrong{"y", FeatureMatrix::Zero(3, 7), FeatureKind::synthetic()};
  EXPECT_THROW(wrong.validate(), ShapeError);
  FeatureSequence empty{"z", FeatureMatrix(0, 8), FeatureKind::synthetic()};
  EXPECT_THROW(empty.validate(), ShapeError);
}

TEST(MelFilterbank, EightSecondsGives798Frames) {
  Waveform w;
  w.samples.assign(128000, 0.0f);
  EXPECT_EQ(mel_filterbank(w).true_length(), 798);
}

TEST(MelFilterbank, FrameCountLawOverRandomDurations) {
  Random rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform(16000.0, 128000.0));
    Waveform w;
    w.samples.assign(n, 0.01f);
    const auto seq = mel_filterbank(w);
    EXPECT_EQ(seq.true_length(), 1 + static_cast<int>((n - 400) / 160)) << n;
    EXPECT_EQ(seq.data.cols(), 40);
  }
}

TEST(MelFilterbank, SilenceHitsTheFloor) {
  Waveform w;
  w.samples.assign(4000, 0.0f);
  const auto seq = mel_filterbank(w);
  const float floor = static_cast<float>(std::log(1e-10));
  for (int t = 0; t < seq.true_length(); ++t)
    for (int d = 0; d < 40; ++d) EXPECT_EQ(seq.data(t, d), floor);
}

TEST(MelFilterbank, SineLandsInNearestCenterBin) {
  // Centers spaced evenly in HTK mel between 0 Hz and 8 kHz, 42 edges.
  const double mel_max = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  int expected = -1;
  double best = 1e9;
  for (int k = 0; k < 40; ++k) {
    const double hz = 700.0 * (std::pow(10.0, (k + 1) * mel_max / 41.0 / 2595.0) - 1.0);
    if (std::abs(hz - 1000.0) < best) best = std::abs(hz - 1000.0), expected = k;
  }
  ASSERT_EQ(expected, 13);

  const auto seq = mel_filterbank(sine(1000.0, 1.0));
  for (int t = 0; t < seq.true_length(); ++t) {
    Eigen::Index arg;
    seq.data.row(t).maxCoeff(&arg);
    EXPECT_EQ(arg, expected) << "frame " << t;
  }
}

TEST(MelFilterbank, AppendingOneHopAddsOneFrame) {
  Waveform w = noise(3, 8000);
  const auto before = mel_filterbank(w);
  w.samples.insert(w.samples.end(), 160, 0.0f);
  const auto after = mel_filterbank(w);
  ASSERT_EQ(after.true_length(), before.true_length() + 1);
  EXPECT_EQ(after.data.topRows(before.true_length()), before.data);
}

TEST(MelFilterbank, RejectsShortOrWrongRate) {
  Waveform shortw;
  shortw.samples.assign(399, 0.0f);
  EXPECT_THROW(mel_filterbank(shortw), InputError);
  Waveform w8k = noise(1, 8000);
  w8k.sample_rate = 8000;
  EXPECT_THROW(mel_filterbank(w8k), InputError);
  shortw.samples.push_back(0.0f);
  EXPECT_EQ(mel_filterbank(shortw).true_length(), 1);
}

TEST(Mfcc, SharesFramingWithFilterbank) {
  const Waveform w = noise(9, 20000);
  EXPECT_EQ(mfcc(w).true_length(), mel_filterbank(w).true_length());
  EXPECT_EQ(mfcc(w, 13).data.cols(), 13);
  EXPECT_EQ(mfcc(w, 13).kind, FeatureKind::mfcc(13));
}

TEST(Mfcc, ConstantFrameOnlyFirstCoefficient) {
  const Eigen::MatrixXd d = dct2_matrix(40, 40);
  const Eigen::VectorXd c = d * Eigen::VectorXd::Constant(40, -3.5);
  EXPECT_NEAR(c[0], -3.5 * std::sqrt(40.0), 1e-12);
  for (int k = 1; k < 40; ++k) EXPECT_NEAR(c[k], 0.0, 1e-12);
  // Silence gives a constant log-mel frame.
  Waveform w;
  w.samples.assign(1600, 0.0f);
  const auto seq = mfcc(w);
  for (int k = 1; k < 40; ++k) EXPECT_NEAR(seq.data(0, k), 0.0, 1e-4);
}

TEST(Mfcc, MatchesNaiveDct) {
  const Waveform w = noise(17, 16000);
  const FilterbankParams p;
  const Eigen::MatrixXd logmel = detail::log_mel_energies(w, p);
  const auto seq = mfcc(w);
  ASSERT_EQ(seq.true_length(), logmel.rows());
  for (int t = 0; t < seq.true_length(); t += 7) {
    std::vector<double> row(logmel.cols());
    for (Eigen::Index j = 0; j < logmel.cols(); ++j) row[j] = logmel(t, j);
    for (int k = 0; k < 40; ++k) {
      const double want = testing_support::oracle_dct(row, k);
      // float32 storage: compare relative to the coefficient's magnitude.
      EXPECT_NEAR(seq.data(t, k), want, 1e-6 * std::max(1.0, std::abs(want)) * 4) << t << "," << k;
    }
  }
}

TEST(Mfcc, DctIsOrthonormal) {
  const Eigen::MatrixXd d = dct2_matrix(40, 40);
  EXPECT_TRUE((d * d.transpose()).isApprox(Eigen::MatrixXd::Identity(40, 40), 1e-12));
}

TEST(Wav, Pcm16RoundTrip) {
  TempDir dir;
  Waveform w = noise(5, 1000);
  write_wav(dir / "a.wav", w);
  const auto back = read_wav(dir / "a.wav");
  ASSERT_EQ(back.samples.size(), w.samples.size());
  EXPECT_EQ(back.sample_rate, 16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 32767.0);
  std::ofstream(dir / "bad.wav") << "RIFX....";
  EXPECT_THROW(read_wav(dir / "bad.wav"), FormatError);
}

TEST(Cache, RoundTripIsBitExact) {
  TempDir dir;
  Random rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = testing_support::random_sequence(rng, "utt" + std::to_string(trial), 1 + trial * 13, 8);
    s.data(0, 0) = -0.0f;
    s.data(0, 1) = std::numeric_limits<float>::denorm_min();
    const auto path = write_cache(s, dir.path());
    EXPECT_EQ(path, dir.path() / (s.utterance_id + ".emsf"));
    const auto back = read_cache(dir.path(), s.utterance_id, s.kind);
    EXPECT_EQ(back, s);
    EXPECT_EQ(std::memcmp(back.data.data(), s.data.data(), sizeof(float) * s.data.size()), 0);
  }
}

TEST(Cache, LayoutSizeFor398x1024) {
  TempDir dir;
  const FeatureKind kind = FeatureKind::parse("hubert-large");
  FeatureSequence s{"big", FeatureMatrix::Constant(398, 1024, 0.25f), kind};
  const auto path = write_cache(s, dir.path());
  // magic 4 + version/T/D/name-length 4*4 + "hubert-large" 12
  EXPECT_EQ(cache_header_bytes(kind.name()), 32u);
  EXPECT_EQ(std::filesystem::file_size(path), 32u + 1630208u);
  EXPECT_EQ(read_cache_file(path, kind), s);
}

TEST(Cache, CorruptedMagicRejected) {
  TempDir dir;
  FeatureSequence s{"m", FeatureMatrix::Ones(4, 8), FeatureKind::synthetic()};
  const auto path = write_cache(s, dir.path());
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_THROW(read_cache_file(path), FormatError);
}

TEST(Cache, VersionKindAndTruncation) {
  TempDir dir;
  FeatureSequence s{"v", FeatureMatrix::Ones(4, 8), FeatureKind::synthetic()};
  const auto path = write_cache(s, dir.path());
  EXPECT_THROW(read_cache_file(path, FeatureKind::synthetic(4)), FormatError);
  EXPECT_THROW(read_cache_file(path, FeatureKind::melfb40()), FormatError);

  const std::string bytes = testing_support::slurp(path);
  std::string bumped = bytes;
  bumped[4] = 2;
  std::ofstream(dir / "ver.emsf", std::ios::binary) << bumped;
  EXPECT_THROW(read_cache_file(dir / "ver.emsf"), FormatError);
  std::ofstream(dir / "cut.emsf", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(read_cache_file(dir / "cut.emsf"), IoError);
  EXPECT_THROW(read_cache(dir.path(), "absent"), IoError);
}

TEST(Cache, RejectsNonFiniteOnWrite) {
  TempDir dir;
  FeatureSequence s{"nan", FeatureMatrix::Ones(2, 8), FeatureKind::synthetic()};
  s.data(1, 1) = std::nanf("");
  EXPECT_THROW(write_cache(s, dir.path()), ValidationError);
  EXPECT_FALSE(std::filesystem::exists(dir / "nan.emsf"));
}

TEST(Embeddings, MissingModelNamesIt) {
  EmbeddingRegistry reg;
  try {
    extract_embeddings(noise(1, 16000), "hubert-large", reg, "u1");
    FAIL();
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("hubert-large"), std::string::npos);
  }
  EXPECT_THROW(extract_embeddings(noise(1, 16000), "melfb40", reg, "u1"), ConfigurationError);
}

TEST(Embeddings, AdapterFailureCarriesUtteranceId) {
  EmbeddingRegistry reg;
  reg.add(std::make_unique<FakeModel>(FeatureKind::parse("hubert-base"), true));
  try {
    extract_embeddings(noise(1, 16000), "hubert-base", reg, "utt-77");
    FAIL();
  } catch (const ExtractionError& e) {
    EXPECT_NE(std::string(e.what()).find("utt-77"), std::string::npos);
  }
}

TEST(Embeddings, ShapeDeterminismAndFrameRate) {
  EmbeddingRegistry reg;
  reg.add(std::make_unique<FakeModel>(FeatureKind::parse("hubert-large")));
  Waveform w = noise(4, static_cast<std::size_t>(7.96 * 16000));
  const auto a = extract_embeddings(w, "hubert-large", reg, "a");
  EXPECT_EQ(a.data.cols(), 1024);
  EXPECT_LE(a.true_length(), 398);
  EXPECT_EQ(extract_embeddings(w, "hubert-large", reg, "a"), a);

  const int t1 = extract_embeddings(noise(1, 16000), "hubert-large", reg).true_length();
  const int t2 = extract_embeddings(noise(1, 32000), "hubert-large", reg).true_length();
  EXPECT_LE(std::abs(t2 - 2 * t1), 1);
}

TEST(Embeddings, WrongDimensionIsRejected) {
  class Bad final : public EmbeddingProvider {
   public:
    FeatureKind kind() const override { return FeatureKind::parse("wav2vec2-base"); }
    FeatureMatrix embed(const Waveform&) override { return FeatureMatrix::Zero(10, 100); }
  };
  EmbeddingRegistry reg;
  reg.add(std::make_unique<Bad>());
  EXPECT_THROW(extract_embeddings(noise(1, 16000), "wav2vec2-base", reg, "u"), ExtractionError);
}

TEST(Embeddings, ExternalCommandFailureIsExtractionError) {
  TempDir dir;
  EmbeddingRegistry reg;
  reg.add(std::make_unique<ExternalCommandProvider>(FeatureKind::parse("hubert-base"), "exit 3", dir / "scratch"));
  EXPECT_THROW(extract_embeddings(noise(1, 16000), "hubert-base", reg, "u"), ExtractionError);
}

TEST(Embeddings, ExternalCommandSubstitutesPaths) {
  TempDir dir;
  // The "model" copies a prepared cache file to {out}.
  const FeatureKind kind = FeatureKind::parse("hubert-base");
  FeatureSequence prepared{"p", FeatureMatrix::Constant(49, 768, 0.5f), kind};
  const auto src = write_cache(prepared, dir / "prepared");
  EmbeddingRegistry reg;
  reg.add(std::make_unique<ExternalCommandProvider>(kind, "test -f {wav} && cp '" + src.string() + "' {out}",
                                                    dir / "scratch"));
  const auto seq = extract_embeddings(noise(1, 16000), "hubert-base", reg, "u");
  EXPECT_EQ(seq.data, prepared.data);
  EXPECT_EQ(seq.utterance_id, "u");
}
