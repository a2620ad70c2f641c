#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "peqfit/errors.hpp"

namespace peqfit {

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a sibling temp file and renames it over the target, so readers
// never see a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path.string() + "'");
  }
}

namespace detail {
inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}
}  // namespace detail

/// Mono 32-bit IEEE float WAV (format tag 3), little endian.
inline std::string encode_wav_f32(std::span<const double> samples, std::uint32_t sample_rate) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  std::string s;
  s.reserve(58 + data_bytes);
  s += "RIFF";
  detail::put_u32(s, 50 + data_bytes);
  s += "WAVE";
  s += "fmt ";
  detail::put_u32(s, 18);
  detail::put_u16(s, 3);  // WAVE_FORMAT_IEEE_FLOAT
  detail::put_u16(s, 1);
  detail::put_u32(s, sample_rate);
  detail::put_u32(s, sample_rate * 4);
  detail::put_u16(s, 4);
  detail::put_u16(s, 32);
  detail::put_u16(s, 0);
  s += "fact";
  detail::put_u32(s, 4);
  detail::put_u32(s, static_cast<std::uint32_t>(samples.size()));
  s += "data";
  detail::put_u32(s, data_bytes);
  for (double x : samples) {
    const float f = static_cast<float>(x);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(s, bits);
  }
  return s;
}

struct WavData {
  std::uint32_t sample_rate = 0;
  std::vector<float> samples;
};

// Reads back what encode_wav_f32 writes (mono float32 only).
inline WavData decode_wav_f32(std::string_view bytes) {
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    return v;
  };
  auto u16 = [&](std::size_t at) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[at]) |
                                      (static_cast<unsigned char>(bytes[at + 1]) << 8));
  };
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
    throw ParseError("not a RIFF/WAVE file");
  }
  WavData out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto id = bytes.substr(pos, 4);
    const std::uint32_t size = u32(pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw ParseError("truncated WAV chunk");
    if (id == "fmt ") {
      if (u16(body) != 3 || u16(body + 2) != 1 || u16(body + 14) != 32) {
        throw ParseError("only mono float32 WAV is supported");
      }
      out.sample_rate = u32(body + 4);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("WAV data before fmt chunk");
      out.samples.resize(size / 4);
      std::memcpy(out.samples.data(), bytes.data() + body, out.samples.size() * 4);
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw ParseError("WAV has no data chunk");
}

}  // namespace peqfit
