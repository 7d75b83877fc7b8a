// Beta-divergence evaluation and the generic multiplicative-update (MU)
// kernels shared by the training, extraction, detection and estimation
// factorizations.
#ifndef NTFSEP_BETAFAC_HPP
#define NTFSEP_BETAFAC_HPP

#include <cmath>
#include <stdexcept>

#include "ntfsep/common.hpp"

namespace ntfsep {

// Divergence order. beta=0 is Itakura-Saito, beta=1 is Kullback-Leibler,
// beta=2 is squared Euclidean. The two closed-form branches are handled
// exactly, never by limit evaluation.
struct Beta {
  double value;
  explicit Beta(double v) : value(v) {
    if (!std::isfinite(v)) throw std::invalid_argument("Beta: value must be finite");
  }
};

inline double beta_divergence(double a, double b, Beta beta) {
  if (!(b > 0.0)) throw std::domain_error("beta_divergence: b must be positive");
  if (a < 0.0) throw std::domain_error("beta_divergence: a must be nonnegative");
  const double bv = beta.value;
  if (a == b) return 0.0;
  if (bv == 0.0) {
    if (a == 0.0) throw std::domain_error("beta_divergence: IS branch undefined at a=0");
    return a / b - std::log(a / b) - 1.0;
  }
  if (bv == 1.0) {
    if (a == 0.0) return b;  // finite limit of a*log(a/b) + b - a
    return a * std::log(a / b) + b - a;
  }
  return (std::pow(a, bv) + (bv - 1.0) * std::pow(b, bv) - bv * a * std::pow(b, bv - 1.0)) /
         (bv * (bv - 1.0));
}

inline double total_divergence(const Mat& A, const Mat& B, Beta beta) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("total_divergence: shape mismatch");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      acc += beta_divergence(A(i, j), floored(B(i, j)), beta);
  return acc;
}

// Magnitude power with phase preserved: z^p = |z|^p * e^{i arg z}.
// Magnitudes are floored before negative powers, so the operation is total.
inline cplx elementwise_power(cplx z, double p) {
  double r = std::abs(z);
  if (r < kEps && p < 0.0) r = kEps;
  if (r == 0.0) return {0.0, 0.0};
  return std::polar(std::pow(r, p), std::arg(z));
}

inline CMat elementwise_power(const CMat& Z, double p) {
  return Z.unaryExpr([p](cplx z) { return elementwise_power(z, p); });
}

inline Mat elementwise_power(const Mat& Z, double p) {
  if (p < 0.0) return floored(Z).pow(p);
  return Z.pow(p);
}

// One MU step: factor * numerator / denominator, elementwise. Denominators
// are floored. Zero factor entries stay zero (MU zero-locking).
inline Mat mu_step(const Mat& numerator, const Mat& denominator, const Mat& factor) {
  if (numerator.rows() != denominator.rows() || numerator.cols() != denominator.cols() ||
      numerator.rows() != factor.rows() || numerator.cols() != factor.cols())
    throw std::invalid_argument("mu_step: shape mismatch");
  return factor * numerator / denominator.max(kEps);
}

}  // namespace ntfsep

#endif
