// STFT analysis/synthesis front-end. One-sided spectra (bins = N/2+1),
// weighted overlap-add synthesis normalized by the summed squared window.
#ifndef NTFSEP_STFT_HPP
#define NTFSEP_STFT_HPP

#include <stdexcept>
#include <vector>

#include "ntfsep/common.hpp"
#include "ntfsep/fft.hpp"

namespace ntfsep {

enum class Window { Hann, Rect };

struct StftConfig {
  double sample_rate = 16000.0;
  int window_len = 2048;
  int hop = 1024;
  Window window = Window::Hann;

  int bins() const { return window_len / 2 + 1; }
  void validate() const {
    if (window_len <= 0 || hop <= 0 || hop > window_len)
      throw std::invalid_argument("StftConfig: require 0 < hop <= window_len");
    if (!fft::is_pow2(static_cast<std::size_t>(window_len)))
      throw std::invalid_argument("StftConfig: window_len must be a power of two");
  }
};

inline Vec make_window(const StftConfig& cfg) {
  Vec w(cfg.window_len);
  if (cfg.window == Window::Rect) {
    w.setOnes();
  } else {
    // periodic Hann
    for (int t = 0; t < cfg.window_len; ++t)
      w[t] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t / cfg.window_len));
  }
  return w;
}

// Complex one-sided STFT tensor, indexed (bin, frame, channel).
// ch[m] holds an Omega x L array for channel m.
struct Spectrogram {
  int bins = 0;
  int frames = 0;
  int channels = 0;
  std::vector<CMat> ch;

  static Spectrogram zeros(int bins, int frames, int channels) {
    Spectrogram s;
    s.bins = bins;
    s.frames = frames;
    s.channels = channels;
    s.ch.assign(channels, CMat::Zero(bins, frames));
    return s;
  }
};

// signal: samples x channels. Frame l covers samples [l*hop, l*hop+window_len),
// zero-padded past the end of the signal.
inline Spectrogram analyze(const Mat& signal, const StftConfig& cfg) {
  cfg.validate();
  const auto len = signal.rows();
  const int M = static_cast<int>(signal.cols());
  if (len < cfg.window_len || M < 1)
    throw std::invalid_argument("analyze: signal shorter than one window");
  const int L = static_cast<int>((len - 1) / cfg.hop) + 1;
  const int N = cfg.window_len;
  const Vec w = make_window(cfg);

  Spectrogram spec = Spectrogram::zeros(cfg.bins(), L, M);
  std::vector<cplx> buf(N);
  for (int m = 0; m < M; ++m) {
    for (int l = 0; l < L; ++l) {
      const Eigen::Index start = static_cast<Eigen::Index>(l) * cfg.hop;
      for (int t = 0; t < N; ++t) {
        const Eigen::Index idx = start + t;
        const double s = idx < len ? signal(idx, m) : 0.0;
        buf[t] = {w[t] * s, 0.0};
      }
      fft::transform(buf);
      for (int k = 0; k < spec.bins; ++k) spec.ch[m](k, l) = buf[k];
    }
  }
  return spec;
}

// Weighted overlap-add inverse. out_len = 0 returns the full covered span
// (L-1)*hop + window_len; otherwise the result is trimmed to out_len samples.
inline Mat synthesize(const Spectrogram& spec, const StftConfig& cfg, Eigen::Index out_len = 0) {
  cfg.validate();
  if (spec.bins != cfg.bins() || spec.channels != static_cast<int>(spec.ch.size()))
    throw std::invalid_argument("synthesize: spectrogram inconsistent with config");
  const int N = cfg.window_len;
  const int L = spec.frames;
  const int M = spec.channels;
  const Eigen::Index full = static_cast<Eigen::Index>(L - 1) * cfg.hop + N;
  if (out_len <= 0 || out_len > full) out_len = full;
  const Vec w = make_window(cfg);

  Mat out = Mat::Zero(full, M);
  Vec norm = Vec::Zero(full);
  std::vector<cplx> buf(N);
  for (int m = 0; m < M; ++m) {
    for (int l = 0; l < L; ++l) {
      for (int k = 0; k < spec.bins; ++k) buf[k] = spec.ch[m](k, l);
      for (int k = spec.bins; k < N; ++k) buf[k] = std::conj(spec.ch[m](N - k, l));
      fft::transform(buf, true);
      const Eigen::Index start = static_cast<Eigen::Index>(l) * cfg.hop;
      for (int t = 0; t < N; ++t) {
        out(start + t, m) += w[t] * buf[t].real();
        if (m == 0) norm[start + t] += w[t] * w[t];
      }
    }
  }
  // clamp the normalizer: near the signal edges the window-power sum decays
  // to zero, and dividing a modified spectrogram by it would blow up the
  // first and last samples; the interior is untouched by the clamp
  const double floor_norm = 1e-2 * norm.maxCoeff();
  for (int m = 0; m < M; ++m)
    for (Eigen::Index t = 0; t < full; ++t)
      out(t, m) /= std::max(norm[t], std::max(floor_norm, kEps));
  return out.topRows(out_len);
}

}  // namespace ntfsep

#endif
