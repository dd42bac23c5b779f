#pragma once

// Shared fixtures and independent reference implementations ("oracles")
// used by both the unit suite and the acceptance binary. Oracles are
// written with plain loops and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "emoshare/features.hpp"
#include "emoshare/random.hpp"

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "emoshare") {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

inline emoshare::FeatureSequence random_sequence(emoshare::Random& rng, const std::string& id, int length, int dim) {
  emoshare::FeatureSequence s{id, emoshare::FeatureMatrix(length, dim), emoshare::FeatureKind::synthetic(dim)};
  for (int t = 0; t < length; ++t)
    for (int d = 0; d < dim; ++d) s.data(t, d) = static_cast<float>(rng.normal());
  return s;
}

// ---- Spearman: ranks by counting, Pearson by textbook sums -------------

inline std::vector<double> enumerated_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      if (v < x[i]) ++less;
      if (v == x[i]) ++equal;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = enumerated_ranks(x), ry = enumerated_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i] / n, my += ry[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// ---- Network pieces -----------------------------------------------------

using Mat = std::vector<std::vector<double>>;  // [row][col]

inline double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// One LSTM layer over `x` (steps x in). w_ih: 4H x in, w_hh: 4H x H,
// gate rows ordered i, f, g, o. Returns hidden states per step.
inline Mat oracle_lstm_layer(const Mat& x, const Mat& w_ih, const Mat& w_hh, const std::vector<double>& bias) {
  const std::size_t H = w_hh.front().size();
  std::vector<double> h(H, 0.0), c(H, 0.0);
  Mat out;
  for (const auto& xt : x) {
    std::vector<double> z(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double acc = bias[r];
      for (std::size_t k = 0; k < xt.size(); ++k) acc += w_ih[r][k] * xt[k];
      for (std::size_t k = 0; k < H; ++k) acc += w_hh[r][k] * h[k];
      z[r] = acc;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double i = sig(z[j]), f = sig(z[H + j]), g = std::tanh(z[2 * H + j]), o = sig(z[3 * H + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * std::tanh(c[j]);
    }
    out.push_back(h);
  }
  return out;
}

struct OracleAttention {
  std::vector<double> pooled;
  std::vector<double> weights;
};

// q = [h0, h1] * w_q; logits_t = q . v_t / denom; softmax; weighted sum.
inline OracleAttention oracle_attention(const Mat& w_q, const std::vector<double>& h0, const std::vector<double>& h1,
                                        const Mat& values, double denom) {
  const std::size_t H = h0.size();
  std::vector<double> qin(h0);
  qin.insert(qin.end(), h1.begin(), h1.end());
  std::vector<double> q(H, 0.0);
  for (std::size_t j = 0; j < H; ++j)
    for (std::size_t k = 0; k < 2 * H; ++k) q[j] += qin[k] * w_q[k][j];
  std::vector<double> logits;
  for (const auto& v : values) {
    double dot = 0;
    for (std::size_t j = 0; j < H; ++j) dot += q[j] * v[j];
    logits.push_back(dot / denom);
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double total = 0;
  OracleAttention a{std::vector<double>(H, 0.0), {}};
  for (double l : logits) {
    a.weights.push_back(std::exp(l - mx));
    total += a.weights.back();
  }
  for (auto& w : a.weights) w /= total;
  for (std::size_t t = 0; t < values.size(); ++t)
    for (std::size_t j = 0; j < H; ++j) a.pooled[j] += a.weights[t] * values[t][j];
  return a;
}

template <typename M>
Mat to_mat(const M& m) {
  Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = static_cast<double>(m(r, c));
  return out;
}

template <typename V>
std::vector<double> to_vec(const V& v) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(static_cast<double>(v(i)));
  return out;
}

// Orthonormal DCT-II coefficient k of x.
inline double oracle_dct(const std::vector<double>& x, int k) {
  const double n = static_cast<double>(x.size());
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * std::cos(M_PI * k * (2.0 * i + 1.0) / (2.0 * n));
  return acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
}

}  // namespace testing_support
