// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/dsp/wav.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "denoise/errors.h"

namespace denoise::dsp {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path.string());
  std::vector<unsigned char> d((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (d.size() < 12 || std::string(d.begin(), d.begin() + 4) != "RIFF" ||
      std::string(d.begin() + 8, d.begin() + 12) != "WAVE") {
    throw InputError("not a RIFF/WAVE file" + where);
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= d.size()) {
    const std::string id(d.begin() + static_cast<std::ptrdiff_t>(pos),
                         d.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    const std::size_t len = le32(&d[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + len > d.size()) throw InputError("truncated '" + id + "' chunk" + where);
    if (id == "fmt ") {
      if (len < 16) throw InputError("short fmt chunk" + where);
      const auto format = le16(&d[body]);
      const auto channels = le16(&d[body + 2]);
      const auto rate = le32(&d[body + 4]);
      const auto bits = le16(&d[body + 14]);
      if (format != 1) throw InputError("unsupported wav format tag " + std::to_string(format) + " (need PCM=1)" + where);
      if (channels != 1) throw InputError("unsupported channel count " + std::to_string(channels) + " (need mono)" + where);
      if (rate != kSampleRate) throw InputError("unsupported sample rate " + std::to_string(rate) + " (need 16000)" + where);
      if (bits != 16) throw InputError("unsupported bit depth " + std::to_string(bits) + " (need 16)" + where);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw InputError("data chunk before fmt chunk" + where);
      Waveform w;
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        w.samples[i] = static_cast<std::int16_t>(le16(&d[body + 2 * i])) / 32768.0;
      }
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw InputError("no data chunk" + where);
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw InputError("write_wav: sample rate " + std::to_string(w.sample_rate) + " (need 16000) for " + path.string());
  }
  const auto data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<unsigned char> b;
  b.reserve(44 + data_len);
  for (char c : std::string("RIFF")) b.push_back(static_cast<unsigned char>(c));
  put32(b, 36 + data_len);
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<unsigned char>(c));
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, kSampleRate);
  put32(b, kSampleRate * 2);
  put16(b, 2);
  put16(b, 16);
  for (char c : std::string("data")) b.push_back(static_cast<unsigned char>(c));
  put32(b, data_len);
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw InputError("write_wav: non-finite sample for " + path.string());
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
    put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open wav file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw IoError("failed writing wav file: " + path.string());
}

}  // namespace denoise::dsp
