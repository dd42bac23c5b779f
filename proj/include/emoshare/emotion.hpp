#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "emoshare/errors.hpp"

namespace emoshare {

inline constexpr std::size_t kNumEmotions = 9;

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "Anger",    "Boredom",  "Calmness", "Concentration", "Determination",
    "Excitement", "Interest", "Sadness", "Tiredness"};

// One of the nine emotions, identified by its position in the fixed order.
class EmotionId {
 public:
  constexpr EmotionId() = default;
  constexpr explicit EmotionId(std::size_t index) : index_(index) {
    if (index >= kNumEmotions) throw ValidationError("emotion index out of range");
  }

  constexpr std::size_t index() const noexcept { return index_; }
  constexpr std::string_view name() const noexcept { return kEmotionNames[index_]; }

  // Lowercase form used for CSV columns and directory names.
  std::string key() const {
    std::string s(name());
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  }

  static EmotionId parse(std::string_view text) {
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
      const auto& n = kEmotionNames[i];
      if (n.size() == text.size() &&
          std::equal(n.begin(), n.end(), text.begin(), [](char a, char b) {
            return std::tolower(static_cast<unsigned char>(a)) ==
                   std::tolower(static_cast<unsigned char>(b));
          }))
        return EmotionId(i);
    }
    throw ValidationError("unknown emotion '" + std::string(text) + "'");
  }

  friend constexpr bool operator==(EmotionId, EmotionId) = default;
  friend constexpr auto operator<=>(EmotionId, EmotionId) = default;

 private:
  std::size_t index_ = 0;
};

inline const std::array<EmotionId, kNumEmotions>& all_emotions() {
  static const std::array<EmotionId, kNumEmotions> ids = [] {
    std::array<EmotionId, kNumEmotions> out{};
    for (std::size_t i = 0; i < kNumEmotions; ++i) out[i] = EmotionId(i);
    return out;
  }();
  return ids;
}

// Per-emotion perceived share, each value a fraction in [0, 1].
struct EmotionShare {
  std::array<double, kNumEmotions> values{};

  double operator[](EmotionId e) const { return values[e.index()]; }
  double& operator[](EmotionId e) { return values[e.index()]; }

  bool valid() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  }

  friend bool operator==(const EmotionShare&, const EmotionShare&) = default;
};

}  // namespace emoshare
