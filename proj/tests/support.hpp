// Shared test fixtures: synthetic harmonic sources with distinct spectral
// envelopes, mixture scenes, and random model parameters.
#ifndef NTFSEP_TESTS_SUPPORT_HPP
#define NTFSEP_TESTS_SUPPORT_HPP

#include <random>

#include "ntfsep/localgauss.hpp"
#include "ntfsep/mixer.hpp"
#include "ntfsep/priors.hpp"

namespace testsup {

using ntfsep::CMat;
using ntfsep::cplx;
using ntfsep::Mat;
using ntfsep::Vec;

// Six voiced-sound-like sources: harmonic combs with distinct fundamentals
// and formant-like spectral envelopes, amplitude-modulated at a few Hz.
inline Vec harmonic_source(int idx, double seconds, double fs, std::uint64_t seed) {
  static constexpr double f0s[6] = {110.0, 147.0, 196.0, 262.0, 349.0, 466.0};
  static constexpr double centers[6] = {500.0, 900.0, 1400.0, 2000.0, 2700.0, 3400.0};
  static constexpr double widths[6] = {250.0, 300.0, 350.0, 400.0, 450.0, 520.0};
  const int i = idx % 6;
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> jitter(0.85, 1.15);

  const auto T = static_cast<Eigen::Index>(std::lround(seconds * fs));
  const double f0 = f0s[i];
  const int H = static_cast<int>(4000.0 / f0);

  // slow amplitude modulation with occasional near-silent dips
  const double r1 = (1.1 + 0.29 * i) * jitter(rng);
  const double r2 = (2.7 + 0.23 * i) * jitter(rng);
  const double p1 = phase(rng), p2 = phase(rng);
  Vec env(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double s1 = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * r1 * t / fs + p1));
    const double s2 = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * r2 * t / fs + p2));
    env[t] = std::pow(s1, 1.5) * (0.3 + 0.7 * s2);
  }

  Vec out = Vec::Zero(T);
  for (int h = 1; h <= H; ++h) {
    const double f = h * f0;
    const double g =
        std::exp(-(f - centers[i]) * (f - centers[i]) / (2.0 * widths[i] * widths[i])) + 0.03;
    const double ph = phase(rng);
    for (Eigen::Index t = 0; t < T; ++t)
      out[t] += g * std::sin(2.0 * std::numbers::pi * f * t / fs + ph);
  }
  out *= env;
  // a broadband floor keeps time-shifted copies linearly independent and
  // mimics unvoiced excitation
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double tone_rms = std::sqrt(out.square().mean());
  for (Eigen::Index t = 0; t < T; ++t)
    out[t] += 0.08 * tone_rms * gauss(rng) * (0.3 + 0.7 * env[t]);
  const double rms = std::sqrt(out.square().mean());
  if (rms > 0.0) out *= 0.1 / rms;
  return out;
}

struct Scene {
  ntfsep::MixResult mix;  // 2-channel mixture and per-source reference images
  std::vector<Vec> dry;
};

// N-source 2-channel scene with per-source inter-channel delays and an
// optional reverberant tail. Source indices pick spectral identities.
inline Scene make_scene(const std::vector<int>& source_ids, double seconds, double fs, double t60,
                        std::uint64_t seed) {
  static constexpr double delay_table[6] = {0.0, 3.0, -3.0, 5.0, -5.0, 7.0};
  std::mt19937_64 rng(seed * 0x2545f4914f6cdd1dull + 7);
  Scene sc;
  std::vector<Mat> rirs;
  std::vector<double> gains;
  for (std::size_t n = 0; n < source_ids.size(); ++n) {
    sc.dry.push_back(harmonic_source(source_ids[n], seconds, fs, seed + 31 * n));
    rirs.push_back(ntfsep::synth_rir({0.0, delay_table[n]}, t60, fs, rng));
    gains.push_back(1.0);
  }
  sc.mix = ntfsep::synth_mixture_buffers(sc.dry, rirs, gains);
  return sc;
}

inline Mat random_nonneg(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                         double lo = 0.1, double hi = 2.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  return Mat::NullaryExpr(rows, cols, [&]() { return uni(rng); });
}

// Random valid per-source model parameters with PSD spatial covariances.
inline ntfsep::ModelParams random_params(int N, int M, int bins, int frames, int K,
                                         std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ntfsep::ModelParams params;
  for (int n = 0; n < N; ++n) {
    ntfsep::SourceParams p;
    p.U = random_nonneg(bins, K, rng);
    p.W = random_nonneg(K, frames, rng);
    p.R = ntfsep::HermitianField::zeros(bins, 1, M);
    for (int w = 0; w < bins; ++w) {
      Eigen::MatrixXcd A(M, M);
      for (int r = 0; r < M; ++r)
        for (int c = 0; c < M; ++c) A(r, c) = cplx(gauss(rng), gauss(rng));
      Eigen::MatrixXcd R = A * A.adjoint();
      R.diagonal().array() += 0.1;
      p.R.set(w, 0, R);
    }
    params.push_back(std::move(p));
  }
  return params;
}

inline ntfsep::Spectrogram random_spectrogram(int bins, int frames, int channels,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ntfsep::Spectrogram s = ntfsep::Spectrogram::zeros(bins, frames, channels);
  for (auto& c : s.ch)
    c = CMat::NullaryExpr(bins, frames, [&]() { return cplx(gauss(rng), gauss(rng)); });
  return s;
}

}  // namespace testsup

#endif
