#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "emoshare/binary_io.hpp"
#include "emoshare/errors.hpp"
#include "emoshare/features.hpp"

namespace emoshare {

// Minimal RIFF/WAVE support: mono 16-bit PCM or 32-bit float.
inline void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(wav.samples.size());
  const std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  binio::put<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  binio::put<std::uint32_t>(os, 16);
  binio::put<std::uint16_t>(os, 1);  // PCM
  binio::put<std::uint16_t>(os, 1);  // mono
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(wav.sample_rate));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(wav.sample_rate) * 2);
  binio::put<std::uint16_t>(os, 2);
  binio::put<std::uint16_t>(os, 16);
  os.write("data", 4);
  binio::put<std::uint32_t>(os, data_bytes);
  for (float s : wav.samples) {
    const double scaled = std::clamp(static_cast<double>(s), -1.0, 1.0) * 32767.0;
    binio::put<std::int16_t>(os, static_cast<std::int16_t>(std::lround(scaled)));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string what = path.string();
  if (binio::get_bytes(is, 4, what) != "RIFF") throw FormatError(what + ": not a RIFF file");
  binio::get<std::uint32_t>(is, what);
  if (binio::get_bytes(is, 4, what) != "WAVE") throw FormatError(what + ": not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    const std::string id = binio::get_bytes(is, 4, what);
    const auto size = binio::get<std::uint32_t>(is, what);
    if (id == "fmt ") {
      format = binio::get<std::uint16_t>(is, what);
      channels = binio::get<std::uint16_t>(is, what);
      rate = binio::get<std::uint32_t>(is, what);
      binio::get<std::uint32_t>(is, what);
      binio::get<std::uint16_t>(is, what);
      bits = binio::get<std::uint16_t>(is, what);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(what + ": data chunk before fmt chunk");
      if (channels != 1) throw InputError(what + ": only mono audio is supported");
      Waveform wav;
      wav.sample_rate = static_cast<int>(rate);
      if (format == 1 && bits == 16) {
        wav.samples.resize(size / 2);
        for (auto& s : wav.samples) s = binio::get<std::int16_t>(is, what) / 32768.0f;
      } else if (format == 3 && bits == 32) {
        wav.samples.resize(size / 4);
        for (auto& s : wav.samples) s = binio::get<float>(is, what);
      } else {
        throw FormatError(what + ": unsupported sample format");
      }
      return wav;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
}

}  // namespace emoshare
