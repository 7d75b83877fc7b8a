#ifndef NTFSEP_COMMON_HPP
#define NTFSEP_COMMON_HPP

#include <Eigen/Dense>
#include <complex>

namespace ntfsep {

using Mat = Eigen::ArrayXXd;            // real, row/col counts at runtime
using CMat = Eigen::ArrayXXcd;          // complex
using Vec = Eigen::ArrayXd;
using CVec = Eigen::ArrayXcd;
using cplx = std::complex<double>;

// Floor applied to multiplicative-update denominators and to magnitudes
// before negative powers.
inline constexpr double kEps = 1e-12;

inline double floored(double x) { return x < kEps ? kEps : x; }

inline Mat floored(const Mat& m) { return m.max(kEps); }

}  // namespace ntfsep

#endif
