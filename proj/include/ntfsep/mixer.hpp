// Synthetic mixture generation: fractional-delay direct paths, optional
// exponentially decaying noise tails (T60-matched), and FFT convolution of
// sources into per-channel spatial images.
#ifndef NTFSEP_MIXER_HPP
#define NTFSEP_MIXER_HPP

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntfsep/common.hpp"
#include "ntfsep/fft.hpp"
#include "ntfsep/wav.hpp"

namespace ntfsep {

inline constexpr int kSincHalfWidth = 32;
inline constexpr double kDefaultTailGain = 0.03;

// Windowed-sinc fractional-delay kernel plus an optional white-noise tail
// whose envelope decays 60 dB over t60 seconds. Returns taps x channels.
// A common bulk delay keeps negative or fractional delays causal; integer
// nonnegative delays produce pure deltas with no bulk shift.
inline Mat synth_rir(const std::vector<double>& channel_delays, double t60, double fs,
                     std::mt19937_64& rng, double tail_gain = kDefaultTailGain) {
  const int M = static_cast<int>(channel_delays.size());
  if (M < 1) throw std::invalid_argument("synth_rir: no channels");
  bool fractional = false;
  double min_d = channel_delays[0], max_d = channel_delays[0];
  for (double d : channel_delays) {
    if (std::abs(d - std::round(d)) > 1e-9) fractional = true;
    min_d = std::min(min_d, d);
    max_d = std::max(max_d, d);
  }
  const int lead = fractional ? kSincHalfWidth : 0;
  const int bulk = std::max(0, lead - static_cast<int>(std::floor(min_d)));
  const int tail_len = t60 > 0.0 ? static_cast<int>(std::ceil(1.2 * t60 * fs)) : 0;
  const int taps =
      bulk + static_cast<int>(std::ceil(max_d)) + kSincHalfWidth + 2 + tail_len;
  Mat h = Mat::Zero(taps, M);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int m = 0; m < M; ++m) {
    const double d = channel_delays[m] + bulk;
    const int c = static_cast<int>(std::floor(d));
    for (int t = c - kSincHalfWidth; t <= c + kSincHalfWidth + 1; ++t) {
      if (t < 0 || t >= taps) continue;
      const double u = t - d;
      double sinc = std::abs(u) < 1e-12 ? 1.0
                                        : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
      const double win =
          0.5 * (1.0 + std::cos(std::numbers::pi * u / (kSincHalfWidth + 1.0)));
      if (std::abs(u) > kSincHalfWidth + 1.0) continue;
      h(t, m) += sinc * win;
    }
    if (tail_len > 0) {
      const int start = c + 2;
      const double lambda = 3.0 * std::numbers::ln10 / (t60 * fs);
      for (int t = start; t < taps; ++t)
        h(t, m) += tail_gain * gauss(rng) * std::exp(-lambda * (t - start));
    }
  }
  return h;
}

inline Vec fft_convolve(const Vec& a, const Vec& b) {
  const std::size_t out_len = static_cast<std::size_t>(a.size() + b.size() - 1);
  const std::size_t n = fft::next_pow2(out_len);
  std::vector<cplx> fa(n, cplx(0, 0)), fb(n, cplx(0, 0));
  for (Eigen::Index i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (Eigen::Index i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft::transform(fa);
  fft::transform(fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  fft::transform(fa, true);
  Vec out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
  return out;
}

struct MixResult {
  Mat mixture;             // samples x channels
  std::vector<Mat> images; // per source, samples x channels
};

// Convolves each (gain-scaled) source with its RIR and sums the images.
// All outputs share a common length.
inline MixResult synth_mixture_buffers(const std::vector<Vec>& sources,
                                       const std::vector<Mat>& rirs,
                                       const std::vector<double>& gains) {
  if (sources.empty() || sources.size() != rirs.size() || sources.size() != gains.size())
    throw std::invalid_argument("synth_mixture: inconsistent source/rir/gain counts");
  const int M = static_cast<int>(rirs[0].cols());
  Eigen::Index len = 0;
  for (std::size_t n = 0; n < sources.size(); ++n) {
    if (rirs[n].cols() != M) throw std::invalid_argument("synth_mixture: channel count mismatch");
    len = std::max(len, sources[n].size() + rirs[n].rows() - 1);
  }
  MixResult out;
  out.mixture = Mat::Zero(len, M);
  for (std::size_t n = 0; n < sources.size(); ++n) {
    Mat img = Mat::Zero(len, M);
    for (int m = 0; m < M; ++m) {
      const Vec y = fft_convolve(sources[n] * gains[n], rirs[n].col(m));
      img.col(m).head(y.size()) = y;
    }
    out.mixture += img;
    out.images.push_back(std::move(img));
  }
  return out;
}

struct MixSpec {
  struct Source {
    std::string wav;                  // input signal (first channel used)
    double gain = 1.0;
    std::vector<double> delays;      // per-channel fractional sample delays...
    std::string rir_wav;             // ...or an explicit multichannel RIR
  };
  std::vector<Source> sources;
  int channels = 2;
  double t60 = 0.0;                  // synthetic tail decay, seconds
  double tail_gain = kDefaultTailGain;
  std::string out;                   // mixture path
  std::string ref_prefix;            // reference images: <prefix><n>.wav
  std::uint64_t seed = 0;
};

// File-level wrapper: reads sources, builds/loads RIRs, writes the mixture
// and per-source reference images.
inline MixResult synth_mixture(const MixSpec& spec) {
  if (spec.sources.size() < 1) throw std::invalid_argument("synth_mixture: no sources");
  std::mt19937_64 rng(spec.seed);
  std::vector<Vec> signals;
  std::vector<Mat> rirs;
  std::vector<double> gains;
  double rate = 0.0;
  for (const auto& s : spec.sources) {
    AudioBuffer buf = read_wav(s.wav);
    if (rate == 0.0) rate = buf.sample_rate;
    if (buf.sample_rate != rate)
      throw std::runtime_error("synth_mixture: sample rate mismatch in " + s.wav);
    signals.push_back(buf.samples.col(0));
    gains.push_back(s.gain);
    if (!s.rir_wav.empty()) {
      AudioBuffer rir = read_wav(s.rir_wav);
      if (rir.sample_rate != rate)
        throw std::runtime_error("synth_mixture: RIR rate mismatch in " + s.rir_wav);
      rirs.push_back(rir.samples);
    } else {
      if (static_cast<int>(s.delays.size()) != spec.channels)
        throw std::invalid_argument("synth_mixture: need one delay per channel");
      rirs.push_back(synth_rir(s.delays, spec.t60, rate, rng, spec.tail_gain));
    }
  }
  MixResult res = synth_mixture_buffers(signals, rirs, gains);
  if (!spec.out.empty()) write_wav(spec.out, {res.mixture, rate});
  if (!spec.ref_prefix.empty())
    for (std::size_t n = 0; n < res.images.size(); ++n)
      write_wav(spec.ref_prefix + std::to_string(n + 1) + ".wav", {res.images[n], rate});
  return res;
}

}  // namespace ntfsep

#endif
