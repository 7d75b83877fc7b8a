// RIFF/WAVE reader and writer for multichannel PCM16 and IEEE float32.
#ifndef NTFSEP_WAV_HPP
#define NTFSEP_WAV_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntfsep/common.hpp"

namespace ntfsep {

struct AudioBuffer {
  Mat samples;  // frames x channels, [-1, 1) nominal
  double sample_rate = 16000.0;
};

namespace wav_detail {

[[noreturn]] inline void fail(const std::string& what, std::uint64_t offset) {
  std::ostringstream os;
  os << "wav: " << what << " (byte offset " << offset << ")";
  throw std::runtime_error(os.str());
}

inline std::uint32_t rd_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t rd_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void wr_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}
inline void wr_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
}

}  // namespace wav_detail

inline AudioBuffer read_wav(const std::string& path) {
  using namespace wav_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12) fail("truncated RIFF header", bytes.size());
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) fail("missing RIFF magic", 0);
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) fail("missing WAVE tag", 8);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::uint32_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = rd_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) fail("chunk extends past end of file", pos);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) fail("fmt chunk too short", pos);
      format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) fail("no fmt chunk", bytes.size());
  if (!data) fail("no data chunk", bytes.size());
  if (channels == 0 || rate == 0) fail("bad fmt fields", 12);

  AudioBuffer out;
  out.sample_rate = rate;
  const auto off = static_cast<std::uint64_t>(data - bytes.data());
  if (format == 1 && bits == 16) {
    const std::size_t frames = data_len / (2u * channels);
    out.samples.resize(frames, channels);
    for (std::size_t t = 0; t < frames; ++t)
      for (int c = 0; c < channels; ++c) {
        const std::int16_t s =
            static_cast<std::int16_t>(rd_u16(data + 2 * (t * channels + c)));
        out.samples(static_cast<Eigen::Index>(t), c) = s / 32768.0;
      }
  } else if (format == 3 && bits == 32) {
    const std::size_t frames = data_len / (4u * channels);
    out.samples.resize(frames, channels);
    for (std::size_t t = 0; t < frames; ++t)
      for (int c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, data + 4 * (t * channels + c), 4);
        out.samples(static_cast<Eigen::Index>(t), c) = v;
      }
  } else {
    fail("unsupported codec (need PCM16 or float32)", off);
  }
  return out;
}

enum class WavFormat { Float32, Pcm16 };

inline void write_wav(const std::string& path, const AudioBuffer& buf,
                      WavFormat fmt = WavFormat::Float32) {
  using namespace wav_detail;
  const auto frames = buf.samples.rows();
  const int channels = static_cast<int>(buf.samples.cols());
  const int bytes_per = fmt == WavFormat::Float32 ? 4 : 2;
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * channels * bytes_per);

  std::vector<std::uint8_t> v;
  v.reserve(44 + data_len);
  v.insert(v.end(), {'R', 'I', 'F', 'F'});
  wr_u32(v, 36 + data_len);
  v.insert(v.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr_u32(v, 16);
  wr_u16(v, fmt == WavFormat::Float32 ? 3 : 1);
  wr_u16(v, static_cast<std::uint16_t>(channels));
  const auto rate = static_cast<std::uint32_t>(buf.sample_rate);
  wr_u32(v, rate);
  wr_u32(v, rate * channels * bytes_per);
  wr_u16(v, static_cast<std::uint16_t>(channels * bytes_per));
  wr_u16(v, static_cast<std::uint16_t>(bytes_per * 8));
  v.insert(v.end(), {'d', 'a', 't', 'a'});
  wr_u32(v, data_len);

  for (Eigen::Index t = 0; t < frames; ++t)
    for (int c = 0; c < channels; ++c) {
      const double s = buf.samples(t, c);
      if (fmt == WavFormat::Float32) {
        const float fv = static_cast<float>(s);
        std::uint32_t u;
        std::memcpy(&u, &fv, 4);
        wr_u32(v, u);
      } else {
        double scaled = s * 32768.0;
        if (scaled > 32767.0) scaled = 32767.0;
        if (scaled < -32768.0) scaled = -32768.0;
        wr_u16(v, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lrint(scaled))));
      }
    }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot write " + path);
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

}  // namespace ntfsep

#endif
