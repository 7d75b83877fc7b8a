#include <doctest.h>

#include <random>

#include "../tests/support.hpp"
#include "ntfsep/init.hpp"
#include "ntfsep/mixer.hpp"

using namespace ntfsep;

namespace {

StftConfig cfg16k() {
  StftConfig cfg;
  cfg.window_len = 1024;
  cfg.hop = 512;
  cfg.sample_rate = 16000.0;
  return cfg;
}

Mat delayed_pair(const Vec& s, int delay) {
  const Eigen::Index T = s.size();
  Mat x = Mat::Zero(T, 2);
  x.col(0) = s;
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index u = t - delay;
    if (u >= 0 && u < T) x(t, 1) = s[u];
  }
  return x;
}

}  // namespace

TEST_CASE("gcc-phat recovers an integer delay") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec s = Vec::NullaryExpr(16000, [&]() { return gauss(rng); });
  const StftConfig cfg = cfg16k();
  for (const int D : {0, 3, -5}) {
    const Spectrogram x = analyze(delayed_pair(s, D), cfg);
    const TdoaSet taus = estimate_tdoas(x, 1, cfg, 0.2);
    // parabolic refinement biases the peak by well under a hundredth sample
    CHECK(std::abs(taus.taus[0] * cfg.sample_rate - D) < 0.01);
  }
}

TEST_CASE("gcc-phat resolves two opposite delays") {
  const StftConfig cfg = cfg16k();
  const double fs = cfg.sample_rate;
  const Vec s1 = testsup::harmonic_source(0, 1.0, fs, 5);
  const Vec s2 = testsup::harmonic_source(3, 1.0, fs, 6);
  const Mat x = delayed_pair(s1, 4) + delayed_pair(s2, -4);
  const TdoaSet taus = estimate_tdoas(analyze(x, cfg), 2, cfg, 0.2);
  std::vector<double> lags = {taus.taus[0] * fs, taus.taus[1] * fs};
  std::sort(lags.begin(), lags.end());
  CHECK(lags[0] == doctest::Approx(-4.0).epsilon(0.15));
  CHECK(lags[1] == doctest::Approx(4.0).epsilon(0.15));

  CHECK_THROWS(estimate_tdoas(analyze(delayed_pair(s1, 0), cfg), 5, cfg, 0.0001));
}

TEST_CASE("clustering basics") {
  const StftConfig cfg = cfg16k();
  const Vec s = testsup::harmonic_source(1, 0.6, cfg.sample_rate, 8);
  const Spectrogram x = analyze(delayed_pair(s, 2), cfg);

  TdoaSet one;
  one.taus = {2.0 / cfg.sample_rate};
  one.mic_spacing = 0.2;
  const ClusterResult r1 = cluster_tf_points(x, one, cfg);
  CHECK((r1.masks[0] - 1.0).abs().maxCoeff() == 0.0);
  for (int m = 0; m < 2; ++m) CHECK((r1.images[0].ch[m] - x.ch[m]).abs().maxCoeff() == 0.0);
}

TEST_CASE("clustering separates disjoint spectra and partitions the plane") {
  const StftConfig cfg = cfg16k();
  const double fs = cfg.sample_rate;
  // two sinusoids at distinct bin frequencies with opposite delays
  const int k1 = 40, k2 = 200;
  const Eigen::Index T = 16000;
  Vec a(T), b(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    a[t] = std::sin(2.0 * std::numbers::pi * k1 * t / double(cfg.window_len));
    b[t] = std::sin(2.0 * std::numbers::pi * k2 * t / double(cfg.window_len));
  }
  const Mat x = delayed_pair(a, 3) + delayed_pair(b, -3);
  const Spectrogram spec = analyze(x, cfg);
  TdoaSet taus;
  taus.taus = {3.0 / fs, -3.0 / fs};
  taus.mic_spacing = 0.2;
  const ClusterResult r = cluster_tf_points(spec, taus, cfg);

  // masks partition and images sum to x
  CHECK(((r.masks[0] + r.masks[1]) - 1.0).abs().maxCoeff() == 0.0);
  for (int m = 0; m < 2; ++m)
    CHECK((r.images[0].ch[m] + r.images[1].ch[m] - spec.ch[m]).abs().maxCoeff() == 0.0);

  // each sinusoid's bin lands with its own source (interior frames)
  CHECK(r.masks[0](k1, 5) == 1.0);
  CHECK(r.masks[1](k2, 5) == 1.0);

  // invariance to a global channel phase rotation
  Spectrogram rotated = spec;
  const cplx rot = std::polar(1.0, 1.1);
  for (auto& c : rotated.ch) c *= rot;
  const ClusterResult r2 = cluster_tf_points(rotated, taus, cfg);
  CHECK((r2.masks[0] - r.masks[0]).abs().maxCoeff() == 0.0);

  // the zero bin has no phase information: documented tie rule, lowest source
  CHECK(r.masks[0](0, 5) == 1.0);
}

TEST_CASE("synthetic rir basics") {
  std::mt19937_64 rng(52);
  // integer delays, no tail: pure deltas, channel with delay 0 is unshifted
  const Mat h = synth_rir({0.0, 4.0}, 0.0, 16000.0, rng);
  CHECK(h(0, 0) == doctest::Approx(1.0));
  CHECK(h.col(0).abs().sum() == doctest::Approx(1.0));
  CHECK(h(4, 1) == doctest::Approx(1.0));
  CHECK(h.col(1).abs().sum() == doctest::Approx(1.0));
}

TEST_CASE("mixture channel one is the plain sum under zero first-channel delays") {
  std::mt19937_64 rng(53);
  const Vec s1 = testsup::harmonic_source(0, 0.4, 16000.0, 1);
  const Vec s2 = testsup::harmonic_source(2, 0.4, 16000.0, 2);
  // nonnegative integer delays: no causality bulk shift, channel 0 is the
  // plain sum of the dry signals
  const Mat h1 = synth_rir({0.0, 3.0}, 0.0, 16000.0, rng);
  const Mat h2 = synth_rir({0.0, 5.0}, 0.0, 16000.0, rng);
  const MixResult mr = synth_mixture_buffers({s1, s2}, {h1, h2}, {1.0, 1.0});
  const Eigen::Index T = s1.size();
  CHECK((mr.mixture.col(0).head(T) - (s1 + s2)).abs().maxCoeff() < 1e-9);
  CHECK((mr.images[0].col(0).head(T) - s1).abs().maxCoeff() < 1e-9);
  // the mixture is the sum of the images
  CHECK((mr.mixture - (mr.images[0] + mr.images[1])).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fractional delay shifts by the subsample amount") {
  std::mt19937_64 rng(54);
  const double d = 2.5;
  const Mat h = synth_rir({0.0, d}, 0.0, 16000.0, rng);
  // the inter-channel delay shows up as the low-frequency phase slope of
  // H1/H0 regardless of the common bulk delay
  const std::size_t n = fft::next_pow2(static_cast<std::size_t>(h.rows()) * 4);
  std::vector<cplx> h0(n, cplx(0, 0)), h1(n, cplx(0, 0));
  for (Eigen::Index t = 0; t < h.rows(); ++t) {
    h0[t] = h(t, 0);
    h1[t] = h(t, 1);
  }
  fft::transform(h0);
  fft::transform(h1);
  for (std::size_t k = 1; k <= 10; ++k) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    const double measured = -std::arg(h1[k] / h0[k]) / w;
    CHECK(measured == doctest::Approx(d).epsilon(0.01));
  }
}

TEST_CASE("reverberant tail decays 60 dB over t60") {
  std::mt19937_64 rng(55);
  const double fs = 16000.0;
  const double t60 = 0.2;
  const Mat h = synth_rir({0.0, 0.0}, t60, fs, rng, 0.5);
  // fit the log-envelope slope of the tail on channel 0
  const int start = 10;
  const int len = static_cast<int>(t60 * fs);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  const int block = 160;
  for (int b0 = start; b0 + block < start + len; b0 += block) {
    double e = 0.0;
    for (int t = b0; t < b0 + block; ++t) e += h(t, 0) * h(t, 0);
    const double xb = b0 + block / 2.0;
    const double yb = 10.0 * std::log10(e + 1e-300);
    sx += xb;
    sy += yb;
    sxx += xb * xb;
    sxy += xb * yb;
    ++cnt;
  }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);  // dB per sample
  const double decay_over_t60 = -slope * t60 * fs;
  CHECK(decay_over_t60 == doctest::Approx(60.0).epsilon(1.0 / 60.0));
}

TEST_CASE("mix is deterministic given the seed") {
  std::mt19937_64 r1(77), r2(77);
  const Mat h1 = synth_rir({0.0, 1.5}, 0.1, 16000.0, r1);
  const Mat h2 = synth_rir({0.0, 1.5}, 0.1, 16000.0, r2);
  CHECK((h1 - h2).abs().maxCoeff() == 0.0);
}
