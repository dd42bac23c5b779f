#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "emoshare/binary_io.hpp"
#include "emoshare/errors.hpp"
#include "emoshare/features.hpp"

namespace emoshare {

// On-disk layout of one cached feature file (little-endian):
//   "EMSF" | u32 version | u32 T | u32 D | u32 len | kind name (len bytes) | T*D float32, row-major
inline constexpr char kCacheMagic[4] = {'E', 'M', 'S', 'F'};
inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr const char* kCacheExtension = ".emsf";

inline std::size_t cache_header_bytes(const std::string& kind_name) { return 4 + 4 * 4 + kind_name.size(); }

// <cache_root>/<kind>/<split>/
inline std::filesystem::path cache_dir(const std::filesystem::path& root, const FeatureKind& kind,
                                       const std::string& split) {
  return root / kind.name() / split;
}

inline std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& utterance_id) {
  return dir / (utterance_id + kCacheExtension);
}

inline std::filesystem::path write_cache(const FeatureSequence& seq, const std::filesystem::path& dir) {
  seq.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create cache directory " + dir.string() + ": " + ec.message());

  const auto path = cache_path(dir, seq.utterance_id);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    const std::string name = seq.kind.name();
    os.write(kCacheMagic, 4);
    binio::put<std::uint32_t>(os, kCacheVersion);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.data.rows()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.data.cols()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.write(reinterpret_cast<const char*>(seq.data.data()),
             static_cast<std::streamsize>(seq.data.size() * sizeof(float)));
    if (!os) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  return path;
}

inline FeatureSequence read_cache_file(const std::filesystem::path& path,
                                       const std::optional<FeatureKind>& expected = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open cache file " + path.string());
  const std::string what = path.string();
  if (binio::get_bytes(is, 4, what) != std::string(kCacheMagic, 4)) throw FormatError(what + ": bad magic");
  const auto version = binio::get<std::uint32_t>(is, what);
  if (version != kCacheVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const auto rows = binio::get<std::uint32_t>(is, what);
  const auto cols = binio::get<std::uint32_t>(is, what);
  const auto name_len = binio::get<std::uint32_t>(is, what);
  if (name_len > 256) throw FormatError(what + ": implausible kind-name length");
  const std::string name = binio::get_bytes(is, name_len, what);

  FeatureSequence seq;
  seq.utterance_id = path.stem().string();
  if (expected) {
    if (expected->name() != name || expected->dim != static_cast<int>(cols))
      throw FormatError(what + ": holds " + name + "/" + std::to_string(cols) + ", expected " + expected->name() +
                        "/" + std::to_string(expected->dim));
    seq.kind = *expected;
  } else {
    try {
      seq.kind = FeatureKind::parse(name, static_cast<int>(cols));
    } catch (const ConfigurationError& e) {
      throw FormatError(what + ": " + e.what());
    }
  }
  seq.data.resize(rows, cols);
  const auto bytes = static_cast<std::streamsize>(seq.data.size() * sizeof(float));
  if (bytes > 0 && !is.read(reinterpret_cast<char*>(seq.data.data()), bytes))
    throw IoError("truncated cache file " + what);
  return seq;
}

inline FeatureSequence read_cache(const std::filesystem::path& dir, const std::string& utterance_id,
                                  const std::optional<FeatureKind>& expected = std::nullopt) {
  auto seq = read_cache_file(cache_path(dir, utterance_id), expected);
  seq.utterance_id = utterance_id;
  return seq;
}

}  // namespace emoshare
