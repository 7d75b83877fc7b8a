// Spectral-basis prior workflows: offline NMF training, blind NTF
// extraction, and library-based detection with contribution weights.
#ifndef NTFSEP_PRIORS_HPP
#define NTFSEP_PRIORS_HPP

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntfsep/betafac.hpp"

namespace ntfsep {

struct SpectralBasis {
  Mat data;  // bins x K, columns sum to one after training/extraction
  std::string label;
};

struct BasisLibrary {
  std::vector<SpectralBasis> blocks;

  int bins() const { return blocks.empty() ? 0 : static_cast<int>(blocks[0].data.rows()); }
  int total_width() const {
    int w = 0;
    for (const auto& b : blocks) w += static_cast<int>(b.data.cols());
    return w;
  }
  // concatenated [U_1 | U_2 | ... | U_Z]
  Mat concatenated() const {
    Mat U(bins(), total_width());
    int c = 0;
    for (const auto& b : blocks) {
      U.middleCols(c, b.data.cols()) = b.data;
      c += static_cast<int>(b.data.cols());
    }
    return U;
  }
};

// Contribution of each library basis vector, normalized so max = 1.
struct ContributionVector {
  Vec d;                        // length Z*K
  std::vector<int> block_cols;  // width of each block, for index mapping

  double block_sum(int z) const {
    int start = 0;
    for (int i = 0; i < z; ++i) start += block_cols[i];
    return d.segment(start, block_cols[z]).sum();
  }
};

namespace detail {

inline void normalize_columns(Mat& U, Mat* W = nullptr) {
  for (Eigen::Index k = 0; k < U.cols(); ++k) {
    const double s = U.col(k).sum();
    if (s < kEps) continue;
    U.col(k) /= s;
    if (W) W->row(k) *= s;
  }
}

inline Mat random_positive(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.5, 1.5);
  return Mat::NullaryExpr(rows, cols, [&]() { return uni(rng); });
}

}  // namespace detail

inline double train_objective(const Mat& Vt, const Mat& U, const Mat& W, Beta beta) {
  return total_divergence(Vt, (U.matrix() * W.matrix()).array(), beta);
}

// One alternating NMF round: U then W, both plain-ratio MU.
inline void train_step(const Mat& Vt, Mat& U, Mat& W, Beta beta) {
  const double b = beta.value;
  {
    const Mat model = (U.matrix() * W.matrix()).array();
    const Mat num = ((Vt * elementwise_power(model, b - 2.0)).matrix() * W.matrix().transpose())
                        .array();
    const Mat den = (elementwise_power(model, b - 1.0).matrix() * W.matrix().transpose()).array();
    U = mu_step(num, den, U);
  }
  {
    const Mat model = (U.matrix() * W.matrix()).array();
    const Mat num = (U.matrix().transpose() * (Vt * elementwise_power(model, b - 2.0)).matrix())
                        .array();
    const Mat den = (U.matrix().transpose() * elementwise_power(model, b - 1.0).matrix()).array();
    W = mu_step(num, den, W);
  }
}

// NMF training of a spectral basis on concatenated power spectra. Columns of
// U are normalized to unit sum after each iteration; the activations are
// discarded.
inline SpectralBasis train_basis(const Mat& Vt, int K, Beta beta_t, int iters,
                                 std::mt19937_64& rng, const std::string& label = {}) {
  const auto bins = Vt.rows();
  const auto T = Vt.cols();
  if (K > T || K > bins) throw std::invalid_argument("train_basis: K exceeds data size");
  Mat U = detail::random_positive(bins, K, rng);
  Mat W = detail::random_positive(K, T, rng);
  const double scale = Vt.mean() / floored((U.matrix() * W.matrix()).array().mean());
  W *= scale;
  for (int it = 0; it < iters; ++it) {
    train_step(Vt, U, W, beta_t);
    detail::normalize_columns(U, &W);
  }
  return {U, label};
}

inline BasisLibrary build_library(const std::vector<SpectralBasis>& bases) {
  if (bases.empty()) throw std::invalid_argument("build_library: empty basis list");
  for (const auto& b : bases)
    if (b.data.rows() != bases[0].data.rows())
      throw std::invalid_argument("build_library: mismatched bin counts");
  return {bases};
}

inline double extract_objective(const std::vector<Mat>& Vc, const Mat& U,
                                const std::vector<Mat>& Wslices, Beta beta) {
  double acc = 0.0;
  for (std::size_t m = 0; m < Vc.size(); ++m)
    acc += total_divergence(Vc[m], (U.matrix() * Wslices[m].matrix()).array(), beta);
  return acc;
}

// One alternating NTF round for extraction: shared U (slice sums), then the
// per-slice activations.
inline void extract_step(const std::vector<Mat>& Vc, Mat& U, std::vector<Mat>& Wslices,
                         Beta beta) {
  const double b = beta.value;
  Mat num = Mat::Zero(U.rows(), U.cols());
  Mat den = Mat::Zero(U.rows(), U.cols());
  for (std::size_t m = 0; m < Vc.size(); ++m) {
    const Mat model = (U.matrix() * Wslices[m].matrix()).array();
    num += ((Vc[m] * elementwise_power(model, b - 2.0)).matrix() *
            Wslices[m].matrix().transpose())
               .array();
    den += (elementwise_power(model, b - 1.0).matrix() * Wslices[m].matrix().transpose()).array();
  }
  U = mu_step(num, den, U);
  for (std::size_t m = 0; m < Vc.size(); ++m) {
    const Mat model = (U.matrix() * Wslices[m].matrix()).array();
    const Mat n2 = (U.matrix().transpose() * (Vc[m] * elementwise_power(model, b - 2.0)).matrix())
                       .array();
    const Mat d2 = (U.matrix().transpose() * elementwise_power(model, b - 1.0).matrix()).array();
    Wslices[m] = mu_step(n2, d2, Wslices[m]);
  }
}

// Unsupervised NTF extraction of a shared basis from the per-channel
// observation tensor.
inline SpectralBasis extract_basis(const std::vector<Mat>& Vc, int K, Beta beta_e, int iters,
                                   std::mt19937_64& rng, const std::string& label = {}) {
  if (Vc.empty()) throw std::invalid_argument("extract_basis: empty tensor");
  const auto bins = Vc[0].rows();
  const auto L = Vc[0].cols();
  if (K > L) throw std::invalid_argument("extract_basis: K exceeds frame count");
  Mat U = detail::random_positive(bins, K, rng);
  std::vector<Mat> Wslices;
  double obs_mean = 0.0;
  for (const Mat& v : Vc) obs_mean += v.mean();
  obs_mean /= static_cast<double>(Vc.size());
  for (std::size_t m = 0; m < Vc.size(); ++m) Wslices.push_back(detail::random_positive(K, L, rng));
  const double model_mean = (U.matrix() * Wslices[0].matrix()).array().mean();
  for (auto& W : Wslices) W *= obs_mean / floored(model_mean);
  for (int it = 0; it < iters; ++it) {
    extract_step(Vc, U, Wslices, beta_e);
    // normalize U columns, compensating in all activation slices
    for (Eigen::Index k = 0; k < U.cols(); ++k) {
      const double s = U.col(k).sum();
      if (s < kEps) continue;
      U.col(k) /= s;
      for (auto& W : Wslices) W.row(k) *= s;
    }
  }
  return {U, label};
}

inline double detect_objective(const std::vector<Mat>& Vc, const Mat& Ulib,
                               const std::vector<Vec>& D, const Mat& Wlib, Beta beta) {
  double acc = 0.0;
  for (std::size_t m = 0; m < Vc.size(); ++m) {
    const Mat model =
        (Ulib.matrix() * D[m].matrix().asDiagonal() * Wlib.matrix()).array();
    acc += total_divergence(Vc[m], model, beta);
  }
  return acc;
}

// One alternating round of the detection factorization: per-slice diagonal
// contributions, then the shared library activations.
inline void detect_step(const std::vector<Mat>& Vc, const Mat& Ulib, std::vector<Vec>& D,
                        Mat& Wlib, Beta beta) {
  const double b = beta.value;
  for (std::size_t m = 0; m < Vc.size(); ++m) {
    const Mat model = (Ulib.matrix() * D[m].matrix().asDiagonal() * Wlib.matrix()).array();
    // diag(Ulib^T X Wlib^T)_k = (Ulib col k)^T X (Wlib row k)^T
    const Mat Xn = Vc[m] * elementwise_power(model, b - 2.0);
    const Mat Xd = elementwise_power(model, b - 1.0);
    const Mat Yn = (Ulib.matrix().transpose() * Xn.matrix()).array();  // ZK x L
    const Mat Yd = (Ulib.matrix().transpose() * Xd.matrix()).array();
    const Vec num = (Yn * Wlib).rowwise().sum();
    const Vec den = (Yd * Wlib).rowwise().sum();
    D[m] = D[m] * num / den.max(kEps);
  }
  Mat num = Mat::Zero(Wlib.rows(), Wlib.cols());
  Mat den = Mat::Zero(Wlib.rows(), Wlib.cols());
  for (std::size_t m = 0; m < Vc.size(); ++m) {
    const Mat UD = (Ulib.matrix() * D[m].matrix().asDiagonal()).array();
    const Mat model = (UD.matrix() * Wlib.matrix()).array();
    num += (UD.matrix().transpose() * (Vc[m] * elementwise_power(model, b - 2.0)).matrix())
               .array();
    den += (UD.matrix().transpose() * elementwise_power(model, b - 1.0).matrix()).array();
  }
  Wlib = mu_step(num, den, Wlib);
}

// Detection of matched library bases by per-slice diagonal contribution
// weights, averaged over channels and max-normalized.
inline ContributionVector detect_contributions(const std::vector<Mat>& Vc,
                                               const BasisLibrary& lib, Beta beta_d, int iters,
                                               std::mt19937_64& rng) {
  if (lib.blocks.empty()) throw std::invalid_argument("detect_contributions: empty library");
  if (Vc.empty() || Vc[0].rows() != lib.bins())
    throw std::invalid_argument("detect_contributions: dimension mismatch");
  const Mat Ulib = lib.concatenated();
  const int ZK = static_cast<int>(Ulib.cols());
  const auto L = Vc[0].cols();
  const auto M = Vc.size();

  Mat Wlib = detail::random_positive(ZK, L, rng);
  std::vector<Vec> D(M, Vec::Ones(ZK));
  double obs_mean = 0.0;
  for (const Mat& v : Vc) obs_mean += v.mean();
  obs_mean /= static_cast<double>(M);
  const double model_mean = (Ulib.matrix() * Wlib.matrix()).array().mean();
  for (auto& d : D) d *= obs_mean / floored(model_mean);

  for (int it = 0; it < iters; ++it) detect_step(Vc, Ulib, D, Wlib, beta_d);

  ContributionVector cv;
  cv.d = Vec::Zero(ZK);
  for (const auto& d : D) cv.d += d;
  cv.d /= static_cast<double>(M);
  const double dmax = cv.d.maxCoeff();
  if (dmax > 0.0) cv.d /= dmax;
  for (const auto& b : lib.blocks) cv.block_cols.push_back(static_cast<int>(b.data.cols()));
  return cv;
}

// z* = argmax_z sum_k d_z(k); ties break to the lowest index.
inline int select_basis(const ContributionVector& d) {
  int best = 0;
  double best_sum = -1.0;
  for (int z = 0; z < static_cast<int>(d.block_cols.size()); ++z) {
    const double s = d.block_sum(z);
    if (s > best_sum) {
      best_sum = s;
      best = z;
    }
  }
  return best;
}

inline std::vector<int> select_bases(const std::vector<ContributionVector>& per_source,
                                     const BasisLibrary& lib, int N) {
  if (N > static_cast<int>(lib.blocks.size()))
    throw std::invalid_argument("select_bases: N exceeds library size");
  std::vector<int> out;
  out.reserve(per_source.size());
  for (const auto& d : per_source) out.push_back(select_basis(d));
  return out;
}

}  // namespace ntfsep

#endif
