// Local Gaussian model: empirical covariances, model covariance assembly,
// E-step statistics and (smooth) multichannel Wiener filtering.
#ifndef NTFSEP_LOCALGAUSS_HPP
#define NTFSEP_LOCALGAUSS_HPP

#include <Eigen/Eigenvalues>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ntfsep/common.hpp"
#include "ntfsep/stft.hpp"

namespace ntfsep {

// Per-(bin, frame) M x M Hermitian matrix family. Only the upper triangle
// (m1 <= m2) is stored; the lower half is implied by conjugation.
// frames == 1 encodes a time-invariant family such as R_n(omega).
struct HermitianField {
  int bins = 0;
  int frames = 0;
  int channels = 0;
  std::vector<CMat> pairs;  // upper triangle, row-major over (m1, m2)

  static HermitianField zeros(int bins, int frames, int channels) {
    HermitianField f;
    f.bins = bins;
    f.frames = frames;
    f.channels = channels;
    f.pairs.assign(static_cast<std::size_t>(channels) * (channels + 1) / 2,
                   CMat::Zero(bins, frames));
    return f;
  }

  static HermitianField identity(int bins, int frames, int channels) {
    HermitianField f = zeros(bins, frames, channels);
    for (int m = 0; m < channels; ++m) f.pair(m, m).setOnes();
    return f;
  }

  std::size_t pair_index(int m1, int m2) const {  // requires m1 <= m2
    return static_cast<std::size_t>(m1) * channels - static_cast<std::size_t>(m1) * (m1 - 1) / 2 +
           (m2 - m1);
  }
  CMat& pair(int m1, int m2) { return pairs[pair_index(m1, m2)]; }
  const CMat& pair(int m1, int m2) const { return pairs[pair_index(m1, m2)]; }

  cplx entry(int m1, int m2, int w, int l) const {
    if (m1 <= m2) return pair(m1, m2)(w, l);
    return std::conj(pair(m2, m1)(w, l));
  }

  Eigen::MatrixXcd at(int w, int l) const {
    Eigen::MatrixXcd A(channels, channels);
    for (int m1 = 0; m1 < channels; ++m1) {
      A(m1, m1) = pair(m1, m1)(w, l).real();
      for (int m2 = m1 + 1; m2 < channels; ++m2) {
        A(m1, m2) = pair(m1, m2)(w, l);
        A(m2, m1) = std::conj(A(m1, m2));
      }
    }
    return A;
  }

  void set(int w, int l, const Eigen::MatrixXcd& A) {
    for (int m1 = 0; m1 < channels; ++m1)
      for (int m2 = m1; m2 < channels; ++m2)
        pair(m1, m2)(w, l) = m1 == m2 ? cplx(A(m1, m1).real(), 0.0) : A(m1, m2);
  }
};

// Weights for the quadratic empirical covariance neighborhood. Boundary
// positions renormalize over the in-bounds support.
struct NeighborhoodWindow {
  Mat weights;  // (delta_w, delta_l), odd extents, centered

  static NeighborhoodWindow hann3x3() {
    Vec v(3);
    v << 0.5, 1.0, 0.5;
    NeighborhoodWindow win;
    win.weights = (v.matrix() * v.matrix().transpose()).array();
    return win;
  }
};

struct SourceParams {
  Mat U;             // Omega x K spectral basis
  Mat W;             // K x L activations
  HermitianField R;  // Omega x 1 spatial covariance

  Mat variance() const { return (U.matrix() * W.matrix()).array(); }
};

using ModelParams = std::vector<SourceParams>;

inline Mat source_variance(const SourceParams& p) { return p.variance(); }

inline HermitianField empirical_covariance(const Spectrogram& spec,
                                           const NeighborhoodWindow* win = nullptr) {
  const int M = spec.channels;
  HermitianField out = HermitianField::zeros(spec.bins, spec.frames, M);
  for (int m1 = 0; m1 < M; ++m1) {
    for (int m2 = m1; m2 < M; ++m2) {
      CMat P = spec.ch[m1] * spec.ch[m2].conjugate();
      if (!win) {
        out.pair(m1, m2) = P;
        continue;
      }
      const int hw = static_cast<int>(win->weights.rows()) / 2;
      const int hl = static_cast<int>(win->weights.cols()) / 2;
      CMat& S = out.pair(m1, m2);
      for (int l = 0; l < spec.frames; ++l) {
        for (int w = 0; w < spec.bins; ++w) {
          cplx acc(0.0, 0.0);
          double wsum = 0.0;
          for (int dw = -hw; dw <= hw; ++dw) {
            const int ww = w + dw;
            if (ww < 0 || ww >= spec.bins) continue;
            for (int dl = -hl; dl <= hl; ++dl) {
              const int ll = l + dl;
              if (ll < 0 || ll >= spec.frames) continue;
              const double g = win->weights(dw + hw, dl + hl);
              acc += g * P(ww, ll);
              wsum += g;
            }
          }
          S(w, l) = acc / wsum;
        }
      }
    }
  }
  return out;
}

// Sigma_x(w,l) = sum_n v_n(w,l) R_n(w) with v_n = U_n W_n.
inline HermitianField sigma_x(const ModelParams& params) {
  if (params.empty()) throw std::invalid_argument("sigma_x: no sources");
  const int bins = static_cast<int>(params[0].U.rows());
  const int frames = static_cast<int>(params[0].W.cols());
  const int M = params[0].R.channels;
  HermitianField out = HermitianField::zeros(bins, frames, M);
  for (const auto& p : params) {
    if (p.U.rows() != bins || p.W.cols() != frames || p.R.channels != M ||
        p.U.cols() != p.W.rows() || p.R.bins != bins)
      throw std::invalid_argument("sigma_x: dimension mismatch among sources");
    const Mat v = p.variance();
    for (int m1 = 0; m1 < M; ++m1)
      for (int m2 = m1; m2 < M; ++m2)
        out.pair(m1, m2) += v * p.R.pair(m1, m2).col(0).replicate(1, frames);
  }
  return out;
}

// M x M complex gain per (bin, frame), row-major entries.
struct GainField {
  int bins = 0;
  int frames = 0;
  int channels = 0;
  std::vector<CMat> entries;

  static GainField zeros(int bins, int frames, int channels) {
    GainField g;
    g.bins = bins;
    g.frames = frames;
    g.channels = channels;
    g.entries.assign(static_cast<std::size_t>(channels) * channels, CMat::Zero(bins, frames));
    return g;
  }
  static GainField identity(int bins, int frames, int channels) {
    GainField g = zeros(bins, frames, channels);
    for (int m = 0; m < channels; ++m) g.entry(m, m).setOnes();
    return g;
  }
  CMat& entry(int m1, int m2) { return entries[static_cast<std::size_t>(m1) * channels + m2]; }
  const CMat& entry(int m1, int m2) const {
    return entries[static_cast<std::size_t>(m1) * channels + m2];
  }
  Eigen::MatrixXcd at(int w, int l) const {
    Eigen::MatrixXcd A(channels, channels);
    for (int m1 = 0; m1 < channels; ++m1)
      for (int m2 = 0; m2 < channels; ++m2) A(m1, m2) = entry(m1, m2)(w, l);
    return A;
  }
  void set(int w, int l, const Eigen::MatrixXcd& A) {
    for (int m1 = 0; m1 < channels; ++m1)
      for (int m2 = 0; m2 < channels; ++m2) entry(m1, m2)(w, l) = A(m1, m2);
  }
};

namespace detail {

inline constexpr double kInvReg = 1e-9;

// Inverse of a Hermitian PSD matrix with trace-scaled Tikhonov regularization
// followed by one Newton refinement step toward the unregularized inverse.
inline Eigen::MatrixXcd regularized_inverse(const Eigen::MatrixXcd& A, int w, int l) {
  const int M = static_cast<int>(A.rows());
  const double tr = A.trace().real();
  const double shift = kInvReg * std::max(tr, kEps) / M;
  Eigen::MatrixXcd B = A;
  B.diagonal().array() += shift;
  Eigen::MatrixXcd X;
  if (M == 2) {
    const cplx det = B(0, 0) * B(1, 1) - B(0, 1) * B(1, 0);
    if (!(std::abs(det) > 0.0) || !std::isfinite(std::abs(det))) {
      std::ostringstream os;
      os << "wiener_gain: singular covariance at (bin=" << w << ", frame=" << l << ")";
      throw std::runtime_error(os.str());
    }
    X.resize(2, 2);
    X << B(1, 1), -B(0, 1), -B(1, 0), B(0, 0);
    X /= det;
  } else {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(B);
    if (!lu.isInvertible()) {
      std::ostringstream os;
      os << "wiener_gain: singular covariance at (bin=" << w << ", frame=" << l << ")";
      throw std::runtime_error(os.str());
    }
    X = lu.inverse();
  }
  // X ~ (A + shift I)^-1; refine toward A^-1
  return X * (2.0 * Eigen::MatrixXcd::Identity(M, M) - A * X);
}

}  // namespace detail

// Smooth multichannel Wiener gain G_n = Sigma_c [(1-mu) Sigma_x + mu Sigma_c]^-1.
// mu = 0 is the conventional Wiener filter, mu = 1 the identity filter.
inline GainField wiener_gain(const ModelParams& params, int n, const HermitianField& sx,
                             double mu) {
  if (n < 0 || n >= static_cast<int>(params.size()))
    throw std::invalid_argument("wiener_gain: bad source index");
  const int M = sx.channels;
  GainField g = GainField::zeros(sx.bins, sx.frames, M);
  if (mu == 1.0) return GainField::identity(sx.bins, sx.frames, M);

  const SourceParams& p = params[n];
  const Mat v = p.variance();
  for (int l = 0; l < sx.frames; ++l) {
    for (int w = 0; w < sx.bins; ++w) {
      const Eigen::MatrixXcd Sc = v(w, l) * p.R.at(w, 0);
      const Eigen::MatrixXcd A = (1.0 - mu) * sx.at(w, l) + mu * Sc;
      g.set(w, l, Sc * detail::regularized_inverse(A, w, l));
    }
  }
  return g;
}

inline Spectrogram apply_gain(const GainField& g, const Spectrogram& x) {
  if (g.bins != x.bins || g.frames != x.frames || g.channels != x.channels)
    throw std::invalid_argument("apply_gain: shape mismatch");
  Spectrogram y = Spectrogram::zeros(x.bins, x.frames, x.channels);
  for (int m1 = 0; m1 < x.channels; ++m1)
    for (int m2 = 0; m2 < x.channels; ++m2) y.ch[m1] += g.entry(m1, m2) * x.ch[m2];
  return y;
}

// R~_cn = R^_cn + (I - G_n) Sigma_cn, with R^ the quadratic empirical
// covariance of the current source image estimate. The second term is
// hermitized before storage.
inline HermitianField estep_statistics(const Spectrogram& c_hat, const GainField& g,
                                       const ModelParams& params, int n,
                                       const NeighborhoodWindow& win) {
  HermitianField out = empirical_covariance(c_hat, &win);
  const SourceParams& p = params.at(n);
  const Mat v = p.variance();
  const int M = out.channels;
  for (int l = 0; l < out.frames; ++l) {
    for (int w = 0; w < out.bins; ++w) {
      const Eigen::MatrixXcd Sc = v(w, l) * p.R.at(w, 0);
      const Eigen::MatrixXcd T =
          (Eigen::MatrixXcd::Identity(M, M) - g.at(w, l)) * Sc;
      const Eigen::MatrixXcd H = 0.5 * (T + T.adjoint());
      out.set(w, l, out.at(w, l) + H);
    }
  }
  return out;
}

// Per-point eigendecomposition with eigenvalues clamped to >= 0. Idempotent.
inline HermitianField psd_project(const HermitianField& field) {
  HermitianField out = field;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
  for (int l = 0; l < field.frames; ++l) {
    for (int w = 0; w < field.bins; ++w) {
      const Eigen::MatrixXcd A = field.at(w, l);
      es.compute(A);
      if (es.eigenvalues().minCoeff() >= 0.0) continue;
      const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
      out.set(w, l, es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint());
    }
  }
  return out;
}

// Diagonal slices (real) and upper off-diagonal views of a Hermitian field.
struct TensorViews {
  std::vector<Mat> diag;      // M slices, bins x frames
  std::vector<CMat> offdiag;  // per (m1 < m2), row-major order
};

inline TensorViews tensor_views(const HermitianField& field) {
  TensorViews v;
  const int M = field.channels;
  v.diag.reserve(M);
  for (int m = 0; m < M; ++m) v.diag.push_back(field.pair(m, m).real());
  for (int m1 = 0; m1 < M; ++m1)
    for (int m2 = m1 + 1; m2 < M; ++m2) v.offdiag.push_back(field.pair(m1, m2));
  return v;
}

inline HermitianField assemble_field(const TensorViews& v) {
  const int M = static_cast<int>(v.diag.size());
  const int bins = static_cast<int>(v.diag[0].rows());
  const int frames = static_cast<int>(v.diag[0].cols());
  HermitianField f = HermitianField::zeros(bins, frames, M);
  for (int m = 0; m < M; ++m) f.pair(m, m) = v.diag[m].cast<cplx>();
  std::size_t k = 0;
  for (int m1 = 0; m1 < M; ++m1)
    for (int m2 = m1 + 1; m2 < M; ++m2) f.pair(m1, m2) = v.offdiag[k++];
  return f;
}

}  // namespace ntfsep

#endif
