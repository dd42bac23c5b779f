#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "emoshare/errors.hpp"

namespace emoshare {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FeatureSource { melfb40, mfcc, wav2vec2_base, wav2vec2_large, hubert_base, hubert_large, synthetic };

// A feature family together with its per-frame dimension and frame period.
// Dimension and period are fixed per kind; mfcc and synthetic accept an
// explicit dimension, synthetic also an explicit period.
struct FeatureKind {
  FeatureSource source = FeatureSource::melfb40;
  int dim = 40;
  double frame_period_ms = 10.0;

  static constexpr int kDefaultMfccDim = 40;
  static constexpr int kDefaultSyntheticDim = 8;
  static constexpr double kDefaultSyntheticPeriodMs = 40.0;

  std::string name() const {
    switch (source) {
      case FeatureSource::melfb40: return "melfb40";
      case FeatureSource::mfcc: return "mfcc";
      case FeatureSource::wav2vec2_base: return "wav2vec2-base";
      case FeatureSource::wav2vec2_large: return "wav2vec2-large";
      case FeatureSource::hubert_base: return "hubert-base";
      case FeatureSource::hubert_large: return "hubert-large";
      case FeatureSource::synthetic: return "synthetic";
    }
    return "unknown";
  }

  bool is_acoustic() const { return source == FeatureSource::melfb40 || source == FeatureSource::mfcc; }
  bool is_pretrained() const { return !is_acoustic() && source != FeatureSource::synthetic; }

  static FeatureKind melfb40() { return {FeatureSource::melfb40, 40, 10.0}; }
  static FeatureKind mfcc(int n = kDefaultMfccDim) { return {FeatureSource::mfcc, n, 10.0}; }
  static FeatureKind synthetic(int dim = kDefaultSyntheticDim, double period_ms = kDefaultSyntheticPeriodMs) {
    return {FeatureSource::synthetic, dim, period_ms};
  }

  // `dim` overrides the default for kinds whose dimension is configurable
  // and must match the fixed dimension otherwise (0 means "default").
  static FeatureKind parse(std::string_view name, int dim = 0, double period_ms = 0.0) {
    auto fixed = [&](FeatureSource s, int d, double p) {
      if (dim != 0 && dim != d)
        throw ConfigurationError("feature kind '" + std::string(name) + "' has fixed dim " + std::to_string(d));
      return FeatureKind{s, d, p};
    };
    if (name == "melfb40") return fixed(FeatureSource::melfb40, 40, 10.0);
    if (name == "mfcc") return mfcc(dim > 0 ? dim : kDefaultMfccDim);
    if (name == "wav2vec2-base") return fixed(FeatureSource::wav2vec2_base, 768, 20.0);
    if (name == "wav2vec2-large") return fixed(FeatureSource::wav2vec2_large, 1024, 20.0);
    if (name == "hubert-base") return fixed(FeatureSource::hubert_base, 768, 20.0);
    if (name == "hubert-large") return fixed(FeatureSource::hubert_large, 1024, 20.0);
    if (name == "synthetic")
      return synthetic(dim > 0 ? dim : kDefaultSyntheticDim, period_ms > 0 ? period_ms : kDefaultSyntheticPeriodMs);
    throw ConfigurationError("unknown feature kind '" + std::string(name) + "'");
  }

  friend bool operator==(const FeatureKind&, const FeatureKind&) = default;
};

// One utterance's frames. Rows are frames, columns feature dimensions.
struct FeatureSequence {
  std::string utterance_id;
  FeatureMatrix data;
  FeatureKind kind;

  int true_length() const { return static_cast<int>(data.rows()); }

  void validate() const {
    if (data.rows() < 1) throw ShapeError("feature sequence '" + utterance_id + "' is empty");
    if (data.cols() != kind.dim)
      throw ShapeError("feature sequence '" + utterance_id + "' has dim " + std::to_string(data.cols()) +
                       ", kind " + kind.name() + " expects " + std::to_string(kind.dim));
    if (!data.allFinite()) throw ValidationError("feature sequence '" + utterance_id + "' has non-finite values");
  }

  friend bool operator==(const FeatureSequence& a, const FeatureSequence& b) {
    return a.utterance_id == b.utterance_id && a.kind == b.kind && a.data.rows() == b.data.rows() &&
           a.data.cols() == b.data.cols() && a.data == b.data;
  }
};

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct FilterbankParams {
  int n_mels = 40;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int sample_rate = 16000;
  double log_floor = 1e-10;
  // Must be a power of two at least as large as the window.
  int n_fft = 512;

  int window_samples() const { return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0)); }
  int hop_samples() const { return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0)); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Number of frames for framing without center padding.
inline int frame_count(std::size_t n_samples, int window, int hop) {
  if (n_samples < static_cast<std::size_t>(window)) return 0;
  return 1 + static_cast<int>((n_samples - static_cast<std::size_t>(window)) / static_cast<std::size_t>(hop));
}

// Center frequencies in Hz of the triangular filters (n_mels of them).
inline std::vector<double> mel_center_frequencies(const FilterbankParams& p) {
  const double lo = hz_to_mel(p.fmin_hz);
  const double hi = hz_to_mel(p.fmax_hz);
  std::vector<double> centers(p.n_mels);
  for (int m = 0; m < p.n_mels; ++m) centers[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (p.n_mels + 1));
  return centers;
}

// n_mels x (n_fft/2 + 1) triangular weights on the linear-frequency FFT bins,
// with edges equally spaced on the mel scale between fmin and fmax.
inline Eigen::MatrixXd mel_filter_matrix(const FilterbankParams& p) {
  const int n_bins = p.n_fft / 2 + 1;
  const double lo = hz_to_mel(p.fmin_hz);
  const double hi = hz_to_mel(p.fmax_hz);
  std::vector<double> edges(p.n_mels + 2);
  for (int i = 0; i < p.n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (p.n_mels + 1));

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(p.n_mels, n_bins);
  for (int m = 0; m < p.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * p.sample_rate / p.n_fft;
      if (f > left && f < right) w(m, k) = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
    }
  }
  return w;
}

namespace detail {

inline void check_waveform(const Waveform& wav, const FilterbankParams& p) {
  if (wav.sample_rate != p.sample_rate)
    throw InputError("expected " + std::to_string(p.sample_rate) + " Hz audio, got " +
                     std::to_string(wav.sample_rate) + " Hz");
  if (wav.samples.size() < static_cast<std::size_t>(p.window_samples()))
    throw InputError("waveform has " + std::to_string(wav.samples.size()) + " samples, fewer than one " +
                     std::to_string(p.window_samples()) + "-sample window");
  if (p.n_fft < p.window_samples() || (p.n_fft & (p.n_fft - 1)) != 0)
    throw ConfigurationError("n_fft must be a power of two covering the window");
}

// Periodic Hann window.
inline std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// Natural-log mel energies, double precision, frames x n_mels.
inline Eigen::MatrixXd log_mel_energies(const Waveform& wav, const FilterbankParams& p) {
  check_waveform(wav, p);
  const int window = p.window_samples();
  const int hop = p.hop_samples();
  const int frames = frame_count(wav.samples.size(), window, hop);
  const int n_bins = p.n_fft / 2 + 1;
  const Eigen::MatrixXd filters = mel_filter_matrix(p);
  const std::vector<double> win = hann(window);

  Eigen::FFT<double> fft;
  std::vector<double> buf(p.n_fft, 0.0);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(n_bins);
  Eigen::MatrixXd out(frames, p.n_mels);
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < window; ++i) buf[i] = wav.samples[start + i] * win[i];
    fft.fwd(spec, buf);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(spec[k]);
    const Eigen::VectorXd energies = filters * power;
    for (int m = 0; m < p.n_mels; ++m) out(t, m) = std::log(energies[m] + p.log_floor);
  }
  return out;
}

}  // namespace detail

// Log mel-filterbank energies: log(E + 1e-10) per band, one row per
// 25 ms Hann-windowed frame at a 10 ms hop.
inline FeatureSequence mel_filterbank(const Waveform& wav, const FilterbankParams& params = {},
                                      std::string utterance_id = {}) {
  const Eigen::MatrixXd e = detail::log_mel_energies(wav, params);
  FeatureKind kind = FeatureKind::melfb40();
  kind.dim = params.n_mels;
  return {std::move(utterance_id), e.cast<float>(), kind};
}

// Orthonormal DCT-II basis, n_out x n_in.
inline Eigen::MatrixXd dct2_matrix(int n_out, int n_in) {
  Eigen::MatrixXd d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int n = 0; n < n_in; ++n) d(k, n) = scale * std::cos(std::numbers::pi * (n + 0.5) * k / n_in);
  }
  return d;
}

// First n_mfcc orthonormal DCT-II coefficients of the log mel energies.
inline FeatureSequence mfcc(const Waveform& wav, int n_mfcc = FeatureKind::kDefaultMfccDim,
                            const FilterbankParams& params = {}, std::string utterance_id = {}) {
  if (n_mfcc < 1 || n_mfcc > params.n_mels)
    throw ConfigurationError("n_mfcc must lie in [1, n_mels]");
  const Eigen::MatrixXd logmel = detail::log_mel_energies(wav, params);
  const Eigen::MatrixXd coeffs = logmel * dct2_matrix(n_mfcc, params.n_mels).transpose();
  return {std::move(utterance_id), coeffs.cast<float>(), FeatureKind::mfcc(n_mfcc)};
}

}  // namespace emoshare
