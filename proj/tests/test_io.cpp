#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "../tests/support.hpp"
#include "ntfsep/library_io.hpp"
#include "ntfsep/wav.hpp"

using namespace ntfsep;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("float32 wav round trip is bit exact") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> gauss(0.0, 0.2);
  Mat s = Mat::NullaryExpr(500, 2, [&]() { return gauss(rng); });
  // float32 storage: quantize the reference the same way
  for (Eigen::Index i = 0; i < s.size(); ++i)
    s.data()[i] = static_cast<double>(static_cast<float>(s.data()[i]));
  const std::string path = tmp_path("ntfsep_rt.wav");
  write_wav(path, {s, 16000.0});
  const AudioBuffer back = read_wav(path);
  CHECK(back.sample_rate == 16000.0);
  CHECK((back.samples - s).abs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("pcm16 scaling convention") {
  Mat s(3, 1);
  s << -1.0, 0.5, 1.0;  // +1.0 clips to 32767
  const std::string path = tmp_path("ntfsep_pcm.wav");
  write_wav(path, {s, 8000.0}, WavFormat::Pcm16);
  const AudioBuffer back = read_wav(path);
  CHECK(back.samples(0, 0) == doctest::Approx(-1.0));
  CHECK(back.samples(1, 0) == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(back.samples(2, 0) == doctest::Approx(32767.0 / 32768.0));
  std::remove(path.c_str());
}

TEST_CASE("malformed wav files raise errors") {
  const std::string path = tmp_path("ntfsep_bad.wav");
  {
    std::ofstream f(path, std::ios::binary);
    f << "RIFF";
  }
  CHECK_THROWS(read_wav(path));
  {
    std::ofstream f(path, std::ios::binary);
    f << "JUNKJUNKJUNKJUNK";
  }
  CHECK_THROWS(read_wav(path));
  CHECK_THROWS(read_wav(tmp_path("ntfsep_missing_file.wav")));
  std::remove(path.c_str());
}

TEST_CASE("library round trip preserves blocks and labels") {
  std::mt19937_64 rng(62);
  std::vector<SpectralBasis> bases;
  for (int z = 0; z < 3; ++z) {
    Mat U = testsup::random_nonneg(16, 4, rng);
    detail::normalize_columns(U);
    bases.push_back({U, "speaker_" + std::to_string(z)});
  }
  const BasisLibrary lib = build_library(bases);
  const std::string path = tmp_path("ntfsep_lib.ntfl");
  save_library(path, lib);
  const BasisLibrary back = load_library(path);
  REQUIRE(back.blocks.size() == 3);
  for (int z = 0; z < 3; ++z) {
    CHECK(back.blocks[z].label == bases[z].label);
    CHECK((back.blocks[z].data - bases[z].data).abs().maxCoeff() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("library corruption is detected") {
  std::mt19937_64 rng(63);
  Mat U = testsup::random_nonneg(8, 3, rng);
  detail::normalize_columns(U);
  const std::string path = tmp_path("ntfsep_crc.ntfl");
  save_library(path, build_library({SpectralBasis{U, "x"}}));

  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  std::uniform_int_distribution<std::size_t> pos(4, bytes.size() - 5);
  std::uniform_int_distribution<int> bit(0, 7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<char> corrupt = bytes;
    corrupt[pos(rng)] ^= static_cast<char>(1 << bit(rng));
    std::ofstream out(path, std::ios::binary);
    out.write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
    out.close();
    CHECK_THROWS(load_library(path));
  }
  std::remove(path.c_str());
}

TEST_CASE("library validation rejects bad content") {
  std::mt19937_64 rng(64);
  Mat U = testsup::random_nonneg(8, 3, rng);  // columns do not sum to one
  BasisLibrary lib{{SpectralBasis{U, "bad"}}};
  CHECK_THROWS(save_library(tmp_path("ntfsep_inv.ntfl"), lib));
}
