// Separation-quality metrics (SDR, ISR, SIR, SAR) over estimated spatial
// images versus reference images, via least-squares projections onto
// time-shifted reference spans.
#ifndef NTFSEP_EVAL_HPP
#define NTFSEP_EVAL_HPP

#include <Eigen/Cholesky>
#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntfsep/common.hpp"
#include "ntfsep/fft.hpp"

namespace ntfsep {

inline constexpr int kDefaultFilterLen = 512;
inline constexpr double kDbCap = 250.0;

namespace eval_detail {

// c(d) = sum_u a[u] b[u+d] for d in [-(F-1), F-1], returned as a vector
// indexed d + F - 1. Signals are zero outside their support.
inline Vec correlate(const Vec& a, const Vec& b, int F) {
  const std::size_t n = fft::next_pow2(static_cast<std::size_t>(std::max(a.size(), b.size())) + F);
  std::vector<cplx> fa(n, cplx(0, 0)), fb(n, cplx(0, 0));
  for (Eigen::Index i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (Eigen::Index i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft::transform(fa);
  fft::transform(fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] = std::conj(fa[i]) * fb[i];
  fft::transform(fa, true);
  Vec out(2 * F - 1);
  for (int d = -(F - 1); d <= F - 1; ++d)
    out[d + F - 1] = fa[(d % static_cast<int>(n) + n) % n].real();
  return out;
}

inline double db_ratio(double num, double den) {
  if (num <= 1e-30 * std::max(den, 1.0)) return -kDbCap;
  if (den <= 1e-25 * num) return kDbCap;
  return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

}  // namespace eval_detail

// Precomputed projection machinery for one reference set: Gram matrices of
// the shifted reference spans and their factorizations.
struct EvalBasis {
  int N = 0, M = 0, F = 0;
  Eigen::Index T = 0, P = 0;            // signal and padded length
  std::vector<Vec> sig;                 // flattened refs, index j*M + m
  Eigen::MatrixXd gram;                 // (N*M*F)^2
  Eigen::LDLT<Eigen::MatrixXd> all_ldlt;
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> full_ldlt;   // per source j
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> match_ldlt;  // per (j, m)
};

inline void check_rank(const Eigen::LDLT<Eigen::MatrixXd>& ldlt, const std::string& what) {
  const Vec d = ldlt.vectorD().array().abs();
  if (ldlt.info() != Eigen::Success || !(d.maxCoeff() > 0.0))
    throw std::runtime_error("eval: rank-deficient projection basis for " + what);
}

// A tiny diagonal ridge keeps the projection solvable when shifted reference
// copies overlap (for instance when one channel is a delayed copy of another).
inline Eigen::MatrixXd ridged(Eigen::MatrixXd g) {
  const double scale = g.diagonal().cwiseAbs().maxCoeff();
  g.diagonal().array() += 1e-10 * scale;
  return g;
}

inline EvalBasis build_eval_basis(const std::vector<Mat>& refs, int F = kDefaultFilterLen) {
  if (refs.empty()) throw std::invalid_argument("eval: no references");
  EvalBasis eb;
  eb.N = static_cast<int>(refs.size());
  eb.M = static_cast<int>(refs[0].cols());
  eb.F = F;
  eb.T = refs[0].rows();
  eb.P = eb.T + F - 1;
  for (const Mat& r : refs) {
    if (r.rows() != eb.T || r.cols() != eb.M)
      throw std::invalid_argument("eval: reference shape mismatch");
    for (int m = 0; m < eb.M; ++m) eb.sig.push_back(r.col(m));
  }
  const int S = eb.N * eb.M;
  eb.gram.resize(S * F, S * F);
  for (int a = 0; a < S; ++a) {
    for (int b = a; b < S; ++b) {
      const Vec c = eval_detail::correlate(eb.sig[a], eb.sig[b], F);
      for (int f1 = 0; f1 < F; ++f1)
        for (int f2 = 0; f2 < F; ++f2) {
          eb.gram(a * F + f1, b * F + f2) = c[(f1 - f2) + F - 1];
          eb.gram(b * F + f2, a * F + f1) = c[(f1 - f2) + F - 1];
        }
    }
  }
  for (int j = 0; j < eb.N; ++j) {
    eb.full_ldlt.emplace_back(
        ridged(eb.gram.block(j * eb.M * F, j * eb.M * F, eb.M * F, eb.M * F)));
    check_rank(eb.full_ldlt.back(), "source " + std::to_string(j + 1));
    for (int m = 0; m < eb.M; ++m) {
      eb.match_ldlt.emplace_back(
          ridged(eb.gram.block((j * eb.M + m) * F, (j * eb.M + m) * F, F, F)));
      check_rank(eb.match_ldlt.back(),
                 "source " + std::to_string(j + 1) + " channel " + std::to_string(m + 1));
    }
  }
  eb.all_ldlt.compute(ridged(eb.gram));
  check_rank(eb.all_ldlt, "the full reference set");
  return eb;
}

// Orthogonal components of one estimate against target source j:
// target (channel-matched span of the target reference), spatial distortion
// (cross-channel target span), interference (all references), artifact
// (remainder). The four sum to the zero-padded estimate exactly.
struct Decomposition {
  Mat target, spat, interf, artif;  // padded length x M
};

inline Decomposition decompose(const EvalBasis& eb, const Mat& est, int j) {
  if (est.rows() != eb.T || est.cols() != eb.M)
    throw std::invalid_argument("eval: estimate shape mismatch");
  const int F = eb.F, M = eb.M, S = eb.N * eb.M;

  // cross-correlations of every reference signal with every estimate channel
  Eigen::MatrixXd rhs(S * F, M);  // rows: basis vector (sig a, shift f)
  for (int a = 0; a < S; ++a)
    for (int mo = 0; mo < M; ++mo) {
      const Vec c = eval_detail::correlate(eb.sig[a], est.col(mo), F);
      for (int f = 0; f < F; ++f) rhs(a * F + f, mo) = c[f + F - 1];
    }

  auto render = [&](const Eigen::MatrixXd& coeff, int sig_base) {
    // coeff: (n_sigs*F) x M, synthesize sum of shifted references
    Mat y = Mat::Zero(eb.P, M);
    const int n_sigs = static_cast<int>(coeff.rows()) / F;
    for (int mo = 0; mo < M; ++mo)
      for (int s = 0; s < n_sigs; ++s) {
        const Vec& r = eb.sig[sig_base + s];
        for (int f = 0; f < F; ++f) {
          const double a = coeff(s * F + f, mo);
          if (a == 0.0) continue;
          y.col(mo).segment(f, r.size()) += a * r;
        }
      }
    return y;
  };

  // channel-matched projection: output channel mo uses only ref channel mo
  Mat p_match = Mat::Zero(eb.P, M);
  for (int mo = 0; mo < M; ++mo) {
    const int a = j * M + mo;
    const Eigen::VectorXd coeff = eb.match_ldlt[a].solve(rhs.block(a * F, mo, F, 1));
    const Vec& r = eb.sig[a];
    for (int f = 0; f < F; ++f)
      if (coeff[f] != 0.0) p_match.col(mo).segment(f, r.size()) += coeff[f] * r;
  }

  const Eigen::MatrixXd coeff_full =
      eb.full_ldlt[j].solve(rhs.block(j * M * F, 0, M * F, M));
  const Mat p_full = render(coeff_full, j * M);

  const Eigen::MatrixXd coeff_all = eb.all_ldlt.solve(rhs);
  const Mat p_all = render(coeff_all, 0);

  Mat est_pad = Mat::Zero(eb.P, M);
  est_pad.topRows(eb.T) = est;

  Decomposition d;
  d.target = p_match;
  d.spat = p_full - p_match;
  d.interf = p_all - p_full;
  d.artif = est_pad - p_all;
  return d;
}

struct Metrics {
  double sdr, isr, sir, sar;
};

inline Metrics metrics_of(const Decomposition& d) {
  const double Et = d.target.square().sum();
  const double Es = d.spat.square().sum();
  const double Ei = d.interf.square().sum();
  const double Ea = d.artif.square().sum();
  using eval_detail::db_ratio;
  return {db_ratio(Et, Es + Ei + Ea), db_ratio(Et, Es), db_ratio(Et + Es, Ei),
          db_ratio(Et + Es + Ei, Ea)};
}

struct MetricReport {
  std::vector<Metrics> fixed;      // estimate i scored against reference i
  std::vector<int> best_perm;      // best_perm[i] = reference assigned to estimate i
  std::vector<Metrics> permuted;   // scores under best_perm
  Metrics fixed_mean{}, permuted_mean{};
};

namespace eval_detail {

inline Metrics mean_of(const std::vector<Metrics>& v) {
  Metrics m{0, 0, 0, 0};
  for (const auto& x : v) {
    m.sdr += x.sdr;
    m.isr += x.isr;
    m.sir += x.sir;
    m.sar += x.sar;
  }
  const double n = static_cast<double>(v.size());
  return {m.sdr / n, m.isr / n, m.sir / n, m.sar / n};
}

}  // namespace eval_detail

// Scores all estimates, both in fixed order and under the SDR-best
// permutation of references (exhaustive, N <= 8).
inline MetricReport score(const std::vector<Mat>& estimates, const std::vector<Mat>& references,
                          int filter_len = kDefaultFilterLen) {
  if (estimates.size() != references.size())
    throw std::invalid_argument("eval: estimate/reference count mismatch");
  const int N = static_cast<int>(estimates.size());
  if (N > 8) throw std::invalid_argument("eval: too many sources for permutation search");
  const EvalBasis eb = build_eval_basis(references, filter_len);

  std::vector<std::vector<Metrics>> table(N, std::vector<Metrics>(N));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) table[i][j] = metrics_of(decompose(eb, estimates[i], j));

  MetricReport rep;
  for (int i = 0; i < N; ++i) rep.fixed.push_back(table[i][i]);
  rep.fixed_mean = eval_detail::mean_of(rep.fixed);

  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sdr = -1e300;
  do {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += table[i][perm[i]].sdr;
    if (s > best_sdr) {
      best_sdr = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  rep.best_perm = best;
  for (int i = 0; i < N; ++i) rep.permuted.push_back(table[i][best[i]]);
  rep.permuted_mean = eval_detail::mean_of(rep.permuted);
  return rep;
}

inline std::string report_table(const MetricReport& rep) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto row = [&](const std::string& name, const Metrics& m) {
    os << std::left << std::setw(12) << name << std::right << std::setw(10) << m.sdr
       << std::setw(10) << m.isr << std::setw(10) << m.sir << std::setw(10) << m.sar << "\n";
  };
  os << std::left << std::setw(12) << "source" << std::right << std::setw(10) << "SDR"
     << std::setw(10) << "ISR" << std::setw(10) << "SIR" << std::setw(10) << "SAR" << "\n";
  for (std::size_t i = 0; i < rep.fixed.size(); ++i)
    row("est" + std::to_string(i + 1), rep.fixed[i]);
  row("mean", rep.fixed_mean);
  os << "best permutation:";
  for (int p : rep.best_perm) os << " ref" << p + 1;
  os << "\n";
  for (std::size_t i = 0; i < rep.permuted.size(); ++i)
    row("perm" + std::to_string(i + 1), rep.permuted[i]);
  row("perm_mean", rep.permuted_mean);
  return os.str();
}

inline std::string report_keyvalues(const MetricReport& rep) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto kv = [&](const std::string& prefix, const Metrics& m) {
    os << prefix << "_sdr=" << m.sdr << "\n"
       << prefix << "_isr=" << m.isr << "\n"
       << prefix << "_sir=" << m.sir << "\n"
       << prefix << "_sar=" << m.sar << "\n";
  };
  for (std::size_t i = 0; i < rep.fixed.size(); ++i) kv("source" + std::to_string(i + 1), rep.fixed[i]);
  kv("mean", rep.fixed_mean);
  for (std::size_t i = 0; i < rep.permuted.size(); ++i)
    kv("perm" + std::to_string(i + 1), rep.permuted[i]);
  kv("perm_mean", rep.permuted_mean);
  return os.str();
}

}  // namespace ntfsep

#endif
