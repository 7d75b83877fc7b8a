// M-step parameter estimation by NTF/NMF: shared activation update,
// per-channel diagonal spatial weights, and complex off-diagonal weights.
#ifndef NTFSEP_ESTIMATION_HPP
#define NTFSEP_ESTIMATION_HPP

#include <random>
#include <stdexcept>
#include <vector>

#include "ntfsep/betafac.hpp"
#include "ntfsep/localgauss.hpp"

namespace ntfsep {

// Nonnegative diagonal spatial weights r^m_n(omega), one column per channel.
struct DiagTensor {
  Mat r;  // bins x M

  static DiagTensor ones(int bins, int channels) { return {Mat::Ones(bins, channels)}; }
};

// Complex off-diagonal spatial weights r^{m1 m2}_n(omega) per pair m1 < m2,
// in row-major pair order. Hermitian counterparts are implied by conjugation.
struct OffDiagWeights {
  std::vector<CVec> r;

  static OffDiagWeights ones(int bins, int channels) {
    OffDiagWeights o;
    o.r.assign(static_cast<std::size_t>(channels) * (channels - 1) / 2, CVec::Ones(bins));
    return o;
  }
};

namespace detail {

// diag(r_m) * U, i.e. U with rows scaled by the channel weights.
inline Mat scaled_basis(const Mat& U, const Vec& rm) {
  return U.colwise() * rm;
}

}  // namespace detail

// Sum of per-channel beta-divergences between the observation slices and the
// model V_R U W; the objective minimized by update_w / update_spatial_diag.
inline double diag_objective(const std::vector<Mat>& Vc, const Mat& U, const Mat& W,
                             const DiagTensor& Vr, Beta beta) {
  double acc = 0.0;
  for (std::size_t m = 0; m < Vc.size(); ++m) {
    const Mat model =
        (detail::scaled_basis(U, Vr.r.col(static_cast<Eigen::Index>(m))).matrix() * W.matrix())
            .array();
    acc += total_divergence(Vc[m], model, beta);
  }
  return acc;
}

// One MU step on the shared activations W. Channel sums are accumulated
// before the ratio, in fixed m-order.
inline Mat update_w(const std::vector<Mat>& Vc, const Mat& U, const Mat& W, const DiagTensor& Vr,
                    Beta beta) {
  const auto M = static_cast<Eigen::Index>(Vc.size());
  if (M == 0 || Vr.r.cols() != M || Vr.r.rows() != U.rows())
    throw std::invalid_argument("update_w: dimension mismatch");
  const double b = beta.value;
  Mat num = Mat::Zero(W.rows(), W.cols());
  Mat den = Mat::Zero(W.rows(), W.cols());
  for (Eigen::Index m = 0; m < M; ++m) {
    if (Vc[m].rows() != U.rows() || Vc[m].cols() != W.cols())
      throw std::invalid_argument("update_w: dimension mismatch");
    const Mat S = detail::scaled_basis(U, Vr.r.col(m));
    const Mat model = (S.matrix() * W.matrix()).array();
    num += (S.matrix().transpose() * (Vc[m] * elementwise_power(model, b - 2.0)).matrix()).array();
    den += (S.matrix().transpose() * elementwise_power(model, b - 1.0).matrix()).array();
  }
  return mu_step(num, den, W);
}

// One MU step on one diagonal slice r_m(omega); slices update independently.
inline Vec update_spatial_diag(const Mat& Vc_m, const Mat& U, const Mat& W, const Vec& rm,
                               Beta beta) {
  if (Vc_m.rows() != U.rows() || Vc_m.cols() != W.cols() || rm.size() != U.rows())
    throw std::invalid_argument("update_spatial_diag: dimension mismatch");
  const double b = beta.value;
  const Mat P = (U.matrix() * W.matrix()).array();
  const Mat model = P.colwise() * rm;
  const Vec num = ((Vc_m * elementwise_power(model, b - 2.0)) * P).rowwise().sum();
  const Vec den = (elementwise_power(model, b - 1.0) * P).rowwise().sum();
  return rm * num / den.max(kEps);
}

// One MU step on one off-diagonal weight vector. Under the magnitude-power
// convention the complex phase factors of numerator and denominator cancel,
// so the update rescales |r| and keeps the phase of the previous iterate.
inline CVec update_spatial_offdiag(const CMat& Vc_off, const Mat& U, const Mat& W, const CVec& r,
                                   Beta beta) {
  if (Vc_off.rows() != U.rows() || Vc_off.cols() != W.cols() || r.size() != U.rows())
    throw std::invalid_argument("update_spatial_offdiag: dimension mismatch");
  const double b = beta.value;
  const Mat P = (U.matrix() * W.matrix()).array();
  CVec out(r.size());
  for (Eigen::Index w = 0; w < r.size(); ++w) {
    cplx num(0.0, 0.0);
    cplx den(0.0, 0.0);
    for (Eigen::Index l = 0; l < P.cols(); ++l) {
      const cplx m = r[w] * P(w, l);
      num += Vc_off(w, l) * elementwise_power(m, b - 2.0) * P(w, l);
      den += elementwise_power(m, b - 1.0) * P(w, l);
    }
    // magnitude follows the usual multiplicative ratio; the phase is the
    // complex ratio's phase, where the iterate's own phase cancels between
    // the numerator and denominator model powers, so the observation phase
    // steers the updated entry
    const double dmag = floored(std::abs(den));
    out[w] = std::abs(r[w]) * num * (std::conj(den) / dmag) / dmag;
  }
  return out;
}

inline double diag_model_mean(const Mat& U, const Mat& W, const DiagTensor& Vr) {
  double acc = 0.0;
  for (Eigen::Index m = 0; m < Vr.r.cols(); ++m)
    acc += (detail::scaled_basis(U, Vr.r.col(m)).matrix() * W.matrix()).array().mean();
  return acc / static_cast<double>(Vr.r.cols());
}

struct EstimationState {
  Mat W;            // K x L
  DiagTensor Vr;    // bins x M
  OffDiagWeights Voff;
};

// Runs `iters` rounds of the shared-W and diagonal-slice updates, then with W
// fixed the off-diagonal updates, and assembles the PSD-projected spatial
// covariance R_n(omega). `state` carries warm starts across outer iterations;
// an empty state is initialized from `rng` (W uniform in (0.5, 1.5), spatial
// weights as identity).
inline SourceParams estimate_source(const TensorViews& views, const Mat& U, int iters, Beta beta_s,
                                    EstimationState& state, std::mt19937_64& rng, int K) {
  const int bins = static_cast<int>(U.rows());
  const int M = static_cast<int>(views.diag.size());
  const int L = static_cast<int>(views.diag[0].cols());
  if (U.cols() != K) throw std::invalid_argument("estimate_source: basis width != K");

  std::vector<Mat> Vc;
  Vc.reserve(M);
  double obs_mean = 0.0;
  for (const Mat& d : views.diag) {
    Vc.push_back(floored(d));
    obs_mean += Vc.back().mean();
  }
  obs_mean /= M;

  if (state.W.size() == 0) {
    std::uniform_real_distribution<double> uni(0.5, 1.5);
    state.W = Mat::NullaryExpr(K, L, [&]() { return uni(rng); });
    state.Vr = DiagTensor::ones(bins, M);
    // match the initial model scale to the observations
    const double model_mean = diag_model_mean(U, state.W, state.Vr);
    state.W *= obs_mean / floored(model_mean);
    state.Voff = OffDiagWeights::ones(bins, M);
  }

  for (int it = 0; it < iters; ++it) {
    state.W = update_w(Vc, U, state.W, state.Vr, beta_s);
    for (int m = 0; m < M; ++m)
      state.Vr.r.col(m) = update_spatial_diag(Vc[m], U, state.W, state.Vr.r.col(m), beta_s);
  }

  // gauge: pin each slice's mean over omega to the mean of slice m=0
  const double ref_mean = floored(state.Vr.r.col(0).mean());
  for (int m = 1; m < M; ++m) {
    const double mm = floored(state.Vr.r.col(m).mean());
    state.Vr.r.col(m) *= ref_mean / mm;
  }

  std::size_t k = 0;
  for (int m1 = 0; m1 < M; ++m1) {
    for (int m2 = m1 + 1; m2 < M; ++m2, ++k) {
      for (int it = 0; it < iters; ++it)
        state.Voff.r[k] = update_spatial_offdiag(views.offdiag[k], U, state.W, state.Voff.r[k],
                                                 beta_s);
    }
  }

  SourceParams p;
  p.U = U;
  p.W = state.W;
  p.R = HermitianField::zeros(bins, 1, M);
  for (int m = 0; m < M; ++m) p.R.pair(m, m) = state.Vr.r.col(m).cast<cplx>();
  k = 0;
  for (int m1 = 0; m1 < M; ++m1)
    for (int m2 = m1 + 1; m2 < M; ++m2) p.R.pair(m1, m2) = state.Voff.r[k++];
  p.R = psd_project(p.R);
  return p;
}

// Estimates all sources independently. `states` and `rng` are per-call
// mutable context; `bases` supplies the fixed U_n.
inline ModelParams estimate_parameters(const std::vector<TensorViews>& views,
                                       const std::vector<Mat>& bases, int iters, Beta beta_s,
                                       std::vector<EstimationState>& states,
                                       std::mt19937_64& rng) {
  if (views.size() != bases.size())
    throw std::invalid_argument("estimate_parameters: views/bases count mismatch");
  states.resize(views.size());
  ModelParams params;
  params.reserve(views.size());
  for (std::size_t n = 0; n < views.size(); ++n)
    params.push_back(estimate_source(views[n], bases[n], iters, beta_s, states[n], rng,
                                     static_cast<int>(bases[n].cols())));
  return params;
}

}  // namespace ntfsep

#endif
