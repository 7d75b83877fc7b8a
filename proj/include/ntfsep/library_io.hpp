// Binary persistence of the basis library ("NTFL" container, CRC32-checked).
#ifndef NTFSEP_LIBRARY_IO_HPP
#define NTFSEP_LIBRARY_IO_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntfsep/priors.hpp"

namespace ntfsep {

namespace lib_detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline void put_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
}
inline void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back((x >> (8 * i)) & 0xff);
}
inline void put_f64(std::vector<std::uint8_t>& v, double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, 8);
  for (int i = 0; i < 8; ++i) v.push_back((u >> (8 * i)) & 0xff);
}

struct Reader {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t pos = 0;

  void need(std::size_t k) const {
    if (pos + k > n) throw std::runtime_error("library: truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t x = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return x;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return x;
  }
  double f64() {
    need(8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    double x;
    std::memcpy(&x, &u, 8);
    return x;
  }
  std::string str(std::size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + pos), k);
    pos += k;
    return s;
  }
};

inline void validate(const BasisLibrary& lib) {
  for (const auto& b : lib.blocks) {
    if ((b.data < 0.0).any()) throw std::runtime_error("library: negative basis entry");
    for (Eigen::Index k = 0; k < b.data.cols(); ++k)
      if (std::abs(b.data.col(k).sum() - 1.0) > 1e-6)
        throw std::runtime_error("library: basis column not unit-sum");
  }
}

}  // namespace lib_detail

inline constexpr std::uint16_t kLibraryVersion = 1;

inline void save_library(const std::string& path, const BasisLibrary& lib) {
  using namespace lib_detail;
  validate(lib);
  std::vector<std::uint8_t> payload;
  put_u16(payload, kLibraryVersion);
  put_u32(payload, static_cast<std::uint32_t>(lib.blocks.size()));
  for (const auto& b : lib.blocks) {
    put_u32(payload, static_cast<std::uint32_t>(b.label.size()));
    payload.insert(payload.end(), b.label.begin(), b.label.end());
    put_u32(payload, static_cast<std::uint32_t>(b.data.rows()));
    put_u32(payload, static_cast<std::uint32_t>(b.data.cols()));
    for (Eigen::Index i = 0; i < b.data.rows(); ++i)
      for (Eigen::Index j = 0; j < b.data.cols(); ++j) put_f64(payload, b.data(i, j));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("library: cannot write " + path);
  f.write("NTFL", 4);
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  const std::uint32_t crc = crc32(payload.data(), payload.size());
  std::uint8_t cb[4] = {static_cast<std::uint8_t>(crc & 0xff),
                        static_cast<std::uint8_t>((crc >> 8) & 0xff),
                        static_cast<std::uint8_t>((crc >> 16) & 0xff),
                        static_cast<std::uint8_t>((crc >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(cb), 4);
}

inline BasisLibrary load_library(const std::string& path) {
  using namespace lib_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("library: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "NTFL", 4) != 0)
    throw std::runtime_error("library: bad magic");
  const std::size_t payload_len = bytes.size() - 8;
  const std::uint8_t* crc_p = bytes.data() + 4 + payload_len;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(crc_p[i]) << (8 * i);
  if (crc32(bytes.data() + 4, payload_len) != stored)
    throw std::runtime_error("library: CRC mismatch");

  Reader r{bytes.data() + 4, payload_len};
  const std::uint16_t version = r.u16();
  if (version != kLibraryVersion) throw std::runtime_error("library: unsupported version");
  const std::uint32_t Z = r.u32();
  BasisLibrary lib;
  for (std::uint32_t z = 0; z < Z; ++z) {
    SpectralBasis b;
    b.label = r.str(r.u32());
    const std::uint32_t bins = r.u32();
    const std::uint32_t K = r.u32();
    b.data.resize(bins, K);
    for (std::uint32_t i = 0; i < bins; ++i)
      for (std::uint32_t j = 0; j < K; ++j) b.data(i, j) = r.f64();
    lib.blocks.push_back(std::move(b));
  }
  validate(lib);
  return lib;
}

}  // namespace ntfsep

#endif
