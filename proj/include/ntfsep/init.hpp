// Initial source-image estimates: GCC-PHAT delay estimation on the first
// channel pair and binary time-frequency clustering against the steering
// phases of the estimated delays.
#ifndef NTFSEP_INIT_HPP
#define NTFSEP_INIT_HPP

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ntfsep/common.hpp"
#include "ntfsep/fft.hpp"
#include "ntfsep/stft.hpp"

namespace ntfsep {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

struct TdoaSet {
  std::vector<double> taus;  // seconds, one per source
  double mic_spacing;        // meters, |tau| <= spacing / c
};

// GCC-PHAT between channels (0, 1), aggregated over frames. Peaks are
// restricted to the physical delay range and refined by parabolic
// interpolation.
inline TdoaSet estimate_tdoas(const Spectrogram& x, int N, const StftConfig& cfg,
                              double mic_spacing) {
  if (x.channels < 2) throw std::invalid_argument("estimate_tdoas: need at least 2 channels");
  const int Nfft = cfg.window_len;
  std::vector<cplx> spec(Nfft, cplx(0.0, 0.0));
  for (int l = 0; l < x.frames; ++l) {
    for (int k = 0; k < x.bins; ++k) {
      const cplx c = std::conj(x.ch[0](k, l)) * x.ch[1](k, l);
      const double a = std::abs(c);
      if (a < kEps) continue;
      spec[k] += c / a;
    }
  }
  for (int k = x.bins; k < Nfft; ++k) spec[k] = std::conj(spec[Nfft - k]);
  fft::transform(spec, true);

  const int max_lag = std::min(Nfft / 2 - 1,
                               static_cast<int>(std::ceil(mic_spacing / kSpeedOfSound *
                                                          cfg.sample_rate)));
  auto corr = [&](int lag) {
    return spec[(lag % Nfft + Nfft) % Nfft].real();
  };

  // local maxima in [-max_lag, max_lag], strongest first, >= 2 samples apart
  std::vector<std::pair<double, int>> peaks;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const double v = corr(lag);
    if (v >= corr(lag - 1) && v >= corr(lag + 1)) peaks.emplace_back(v, lag);
  }
  std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> chosen;
  for (const auto& [v, lag] : peaks) {
    bool ok = true;
    for (int c : chosen)
      if (std::abs(c - lag) < 2) ok = false;
    if (ok) chosen.push_back(lag);
    if (static_cast<int>(chosen.size()) == N) break;
  }
  if (static_cast<int>(chosen.size()) < N) {
    std::ostringstream os;
    os << "estimate_tdoas: found only " << chosen.size() << " distinct peaks (lags:";
    for (int c : chosen) os << ' ' << c;
    os << ") for N=" << N;
    throw std::runtime_error(os.str());
  }

  TdoaSet out;
  out.mic_spacing = mic_spacing;
  for (int lag : chosen) {
    double d = static_cast<double>(lag);
    const double ym = corr(lag - 1), y0 = corr(lag), yp = corr(lag + 1);
    const double denom = ym - 2.0 * y0 + yp;
    if (std::abs(denom) > kEps) {
      const double off = 0.5 * (ym - yp) / denom;
      if (std::abs(off) < 1.0) d += off;
    }
    out.taus.push_back(d / cfg.sample_rate);
  }
  return out;
}

struct ClusterResult {
  std::vector<Mat> masks;           // per source, bins x frames in {0,1}
  std::vector<Spectrogram> images;  // mask applied to all channels
};

// Assigns each TF point to the source whose steering phase e^{-j 2 pi f tau_n}
// is closest to the observed inter-channel phase of channels (0, 1).
// Ties and silent points go to the lowest source index.
inline ClusterResult cluster_tf_points(const Spectrogram& x, const TdoaSet& taus,
                                       const StftConfig& cfg) {
  const int N = static_cast<int>(taus.taus.size());
  if (N < 1) throw std::invalid_argument("cluster_tf_points: empty TDOA set");
  ClusterResult out;
  out.masks.assign(N, Mat::Zero(x.bins, x.frames));
  for (int n = 0; n < N; ++n) out.images.push_back(Spectrogram::zeros(x.bins, x.frames, x.channels));

  for (int l = 0; l < x.frames; ++l) {
    for (int k = 0; k < x.bins; ++k) {
      int best = 0;
      if (N > 1 && x.channels >= 2) {
        const cplx x1 = x.ch[0](k, l);
        const cplx x2 = x.ch[1](k, l);
        if (std::abs(x1) >= kEps && std::abs(x2) >= kEps) {
          const cplx obs = (x2 / x1) / std::abs(x2 / x1);
          const double f = static_cast<double>(k) * cfg.sample_rate / cfg.window_len;
          double best_d = 1e300;
          for (int n = 0; n < N; ++n) {
            const cplx steer = std::polar(1.0, -2.0 * std::numbers::pi * f * taus.taus[n]);
            const double d = std::abs(steer - obs);
            if (d < best_d - 1e-15) {
              best_d = d;
              best = n;
            }
          }
        }
      }
      out.masks[best](k, l) = 1.0;
      for (int m = 0; m < x.channels; ++m) out.images[best].ch[m](k, l) = x.ch[m](k, l);
    }
  }
  return out;
}

}  // namespace ntfsep

#endif
