#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "emoshare/binary_io.hpp"
#include "emoshare/emotion.hpp"
#include "emoshare/errors.hpp"
#include "emoshare/features.hpp"
#include "emoshare/regressor.hpp"

namespace emoshare {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_rho = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  double dev_loss = 0.0;

  friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.epoch == b.epoch && same(a.train_loss, b.train_loss) && same(a.dev_rho, b.dev_rho) &&
           same(a.dev_loss, b.dev_loss);
  }
};

struct ModelCheckpoint {
  RegressorConfig config;
  EmotionId emotion;
  FeatureKind feature_kind;
  Parameters<float> weights;
  std::vector<EpochRecord> train_history;
};

inline nlohmann::json to_json(const RegressorConfig& c) {
  return {{"architecture", to_string(c.architecture)},
          {"input_dim", c.input_dim},
          {"conv_channels", c.conv_channels},
          {"conv_kernel", c.conv.kernel},
          {"conv_stride", c.conv.stride},
          {"conv_padding", c.conv.padding},
          {"lstm_hidden", c.lstm_hidden},
          {"lstm_layers", c.lstm_layers},
          {"ffnn_hidden", c.ffnn_hidden},
          {"dropout", c.dropout},
          {"attention_scale", to_string(c.attention_scale)},
          {"seed", c.seed}};
}

inline RegressorConfig regressor_config_from_json(const nlohmann::json& j) {
  try {
    RegressorConfig c;
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    c.input_dim = j.at("input_dim").get<int>();
    c.conv_channels = j.at("conv_channels").get<int>();
    c.conv.kernel = j.at("conv_kernel").get<int>();
    c.conv.stride = j.at("conv_stride").get<int>();
    c.conv.padding = j.at("conv_padding").get<int>();
    c.lstm_hidden = j.at("lstm_hidden").get<int>();
    c.lstm_layers = j.at("lstm_layers").get<int>();
    c.ffnn_hidden = j.at("ffnn_hidden").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.attention_scale = parse_attention_scale(j.at("attention_scale").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed regressor config: ") + e.what());
  }
}

inline nlohmann::json to_json(const FeatureKind& k) {
  return {{"name", k.name()}, {"dim", k.dim}, {"frame_period_ms", k.frame_period_ms}};
}

inline FeatureKind feature_kind_from_json(const nlohmann::json& j) {
  FeatureKind k = FeatureKind::parse(j.at("name").get<std::string>(), j.at("dim").get<int>(),
                                     j.at("frame_period_ms").get<double>());
  return k;
}

inline nlohmann::json nan_to_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
inline double null_to_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json to_json(const std::vector<EpochRecord>& history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : history)
    arr.push_back({{"epoch", r.epoch},
                   {"train_loss", nan_to_null(r.train_loss)},
                   {"dev_rho", nan_to_null(r.dev_rho)},
                   {"dev_loss", nan_to_null(r.dev_loss)}});
  return arr;
}

inline std::vector<EpochRecord> history_from_json(const nlohmann::json& j) {
  std::vector<EpochRecord> out;
  for (const auto& r : j)
    out.push_back({r.at("epoch").get<int>(), null_to_nan(r.at("train_loss")), null_to_nan(r.at("dev_rho")),
                   null_to_nan(r.at("dev_loss"))});
  return out;
}

// Archive layout: "EMCK" | u32 version | u64 header length | JSON header |
// float32 blobs, one per tensor in header order, row-major.
inline constexpr char kCheckpointMagic[4] = {'E', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ModelCheckpoint& ck, const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = to_json(ck.config);
  header["emotion"] = std::string(ck.emotion.name());
  header["feature_kind"] = to_json(ck.feature_kind);
  header["train_history"] = to_json(ck.train_history);
  nlohmann::json tensors = nlohmann::json::array();
  ck.weights.for_each([&](const std::string& name, const auto& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  header["tensors"] = tensors;
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(kCheckpointMagic, 4);
    binio::put<std::uint32_t>(os, kCheckpointVersion);
    binio::put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    ck.weights.for_each([&](const std::string&, const auto& m) {
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    });
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  const std::string what = path.string();
  if (binio::get_bytes(is, 4, what) != std::string(kCheckpointMagic, 4)) throw FormatError(what + ": bad magic");
  if (binio::get<std::uint32_t>(is, what) != kCheckpointVersion) throw FormatError(what + ": unsupported version");
  const auto len = binio::get<std::uint64_t>(is, what);
  if (len > (1u << 26)) throw FormatError(what + ": implausible header length");
  const auto header = nlohmann::json::parse(binio::get_bytes(is, len, what), nullptr, false);
  if (header.is_discarded()) throw FormatError(what + ": header is not valid JSON");

  ModelCheckpoint ck;
  try {
    ck.config = regressor_config_from_json(header.at("config"));
    ck.emotion = EmotionId::parse(header.at("emotion").get<std::string>());
    ck.feature_kind = feature_kind_from_json(header.at("feature_kind"));
    ck.train_history = history_from_json(header.at("train_history"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  if (ck.feature_kind.dim != ck.config.input_dim)
    throw ShapeError(what + ": feature dim does not match the regressor input dim");

  ck.weights = zero_parameters<float>(ck.config);
  const auto& listed = header.at("tensors");
  std::size_t k = 0;
  ck.weights.for_each([&](const std::string& name, auto& m) {
    if (k >= listed.size()) throw ShapeError(what + ": missing tensor " + name);
    const auto& t = listed[k++];
    if (t.at("name").get<std::string>() != name || t.at("rows").get<Eigen::Index>() != m.rows() ||
        t.at("cols").get<Eigen::Index>() != m.cols())
      throw ShapeError(what + ": tensor " + t.at("name").get<std::string>() + " does not match the config's " + name +
                       " (" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float))))
      throw IoError("truncated checkpoint " + what);
  });
  if (k != listed.size()) throw ShapeError(what + ": unexpected extra tensors");
  return ck;
}

}  // namespace emoshare
