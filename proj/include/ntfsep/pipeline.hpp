// End-to-end separation: STFT, TDOA-clustered initialization, the outer
// loop coupling E-step statistics, basis extraction/detection, parameter
// estimation and smooth Wiener filtering, and inverse STFT.
#ifndef NTFSEP_PIPELINE_HPP
#define NTFSEP_PIPELINE_HPP

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ntfsep/estimation.hpp"
#include "ntfsep/init.hpp"
#include "ntfsep/localgauss.hpp"
#include "ntfsep/priors.hpp"
#include "ntfsep/stft.hpp"

namespace ntfsep {

enum class Mode { Informed, Detect, Blind };

struct SeparationConfig {
  Mode mode = Mode::Informed;
  int sources = 2;
  int basis_size = 15;            // K for blind extraction
  Beta beta_s{0.6};
  Beta beta_e{0.6};
  Beta beta_d{0.3};
  double mu = 0.1;
  int outer_iters = 100;
  int inner_iters_first = 100;    // M-step iterations at the first outer pass
  int inner_iters = 10;           // and afterwards
  int prior_iters = 50;           // extraction / detection iterations
  int redetect_every = 1;         // detect mode: rerun detection every k outer iters
  StftConfig stft;
  NeighborhoodWindow neighborhood = NeighborhoodWindow::hann3x3();
  double convergence_tol = 1e-4;
  double mic_spacing = 0.2;       // meters, for the TDOA search range
  std::uint64_t seed = 0;
};

struct SeparationResult {
  std::vector<Mat> images;             // per source, samples x channels
  std::vector<Spectrogram> images_tf;
  ModelParams params;
  std::vector<double> objective;       // per outer iteration
  std::vector<std::vector<int>> detected;          // detect mode, per outer iteration
  std::vector<std::vector<Vec>> block_likelihood;  // per iteration, per source: block sums / total
  bool converged = false;
};

// True once the relative objective change stays below tol for three
// consecutive steps.
inline bool convergence_check(const std::vector<double>& trace, double tol = 1e-4) {
  if (trace.size() < 4) return false;
  const std::size_t n = trace.size();
  for (std::size_t i = n - 3; i < n; ++i) {
    const double prev = trace[i - 1];
    const double rel = std::abs(trace[i] - prev) / std::max(std::abs(prev), kEps);
    if (rel >= tol) return false;
  }
  return true;
}

namespace pipeline_detail {

inline int thread_count() {
  if (const char* e = std::getenv("NTF_THREADS")) {
    const int n = std::atoi(e);
    if (n >= 1) return n;
  }
  return 1;
}

// Runs fn(i) for i in [0, count), strided across up to thread_count() threads.
// Items must be independent; the first exception is rethrown on the caller.
template <typename Fn>
inline void parallel_for(int count, Fn&& fn) {
  const int threads = std::min(thread_count(), count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errs(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < count; i += threads) fn(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// Mixture negative log-likelihood: sum over TF points of
// tr(Sigma_x^-1 Rhat_x) + log det(pi Sigma_x).
inline double model_objective(const HermitianField& sx, const HermitianField& rx) {
  const int M = sx.channels;
  double acc = 0.0;
  for (int l = 0; l < sx.frames; ++l) {
    for (int w = 0; w < sx.bins; ++w) {
      const Eigen::MatrixXcd S = sx.at(w, l);
      const Eigen::MatrixXcd Si = detail::regularized_inverse(S, w, l);
      acc += (Si * rx.at(w, l)).trace().real();
      const double det = std::max(S.determinant().real(), kEps * kEps);
      acc += std::log(det) + M * std::log(std::numbers::pi);
    }
  }
  return acc;
}

// Divergence of a fixed basis against one source's diagonal statistics after
// a short activation-only fit; used to match provided bases to initial
// clusters.
inline double basis_fit_cost(const std::vector<Mat>& diag, const Mat& U, Beta beta, int iters) {
  std::vector<Mat> Vc;
  double obs_mean = 0.0;
  for (const Mat& d : diag) {
    Vc.push_back(floored(d));
    obs_mean += Vc.back().mean();
  }
  obs_mean /= static_cast<double>(Vc.size());
  const DiagTensor Vr = DiagTensor::ones(U.rows(), static_cast<int>(Vc.size()));
  Mat W = Mat::Ones(U.cols(), Vc[0].cols());
  W *= obs_mean / floored(diag_model_mean(U, W, Vr));
  for (int it = 0; it < iters; ++it) W = update_w(Vc, U, W, Vr, beta);
  return diag_objective(Vc, U, W, Vr, beta);
}

// Minimum-total-cost assignment of bases to clusters, exhaustive over
// permutations (N is small). cost(n, j) scores basis j on cluster n.
inline std::vector<int> match_bases(const Mat& cost) {
  const int N = static_cast<int>(cost.rows());
  std::vector<int> perm(N), best(N);
  for (int i = 0; i < N; ++i) perm[i] = best[i] = i;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (int n = 0; n < N; ++n) acc += cost(n, perm[n]);
    if (acc < best_cost) {
      best_cost = acc;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;  // best[n] = basis index for cluster n
}

inline Vec block_likelihood(const ContributionVector& cv) {
  const int Z = static_cast<int>(cv.block_cols.size());
  Vec v(Z);
  for (int z = 0; z < Z; ++z) v[z] = cv.block_sum(z);
  const double s = v.sum();
  if (s > 0.0) v /= s;
  return v;
}

}  // namespace pipeline_detail

inline SeparationResult separate(const Mat& x, const SeparationConfig& cfg,
                                 const std::vector<Mat>& bases = {},
                                 const BasisLibrary* lib = nullptr) {
  const int N = cfg.sources;
  const int M = static_cast<int>(x.cols());
  if (N < 1) throw std::invalid_argument("separate: need at least one source");
  if (M < 2) throw std::invalid_argument("separate: need at least two channels");
  cfg.stft.validate();
  if (cfg.mode == Mode::Informed && static_cast<int>(bases.size()) != N)
    throw std::invalid_argument("separate: informed mode needs one basis per source");
  if (cfg.mode == Mode::Detect) {
    if (!lib || lib->blocks.empty())
      throw std::invalid_argument("separate: detect mode needs a basis library");
    if (N > static_cast<int>(lib->blocks.size()))
      throw std::invalid_argument("separate: more sources than library blocks");
  }

  const Spectrogram X = analyze(x, cfg.stft);
  const HermitianField rx = empirical_covariance(X, &cfg.neighborhood);

  // initial images by TDOA clustering; trivial all-in-one split for N=1
  std::vector<Spectrogram> c_hat;
  if (N == 1) {
    c_hat.push_back(X);
  } else {
    const TdoaSet taus = estimate_tdoas(X, N, cfg.stft, cfg.mic_spacing);
    c_hat = cluster_tf_points(X, taus, cfg.stft).images;
  }

  // per-source deterministic generators, drawn in fixed order
  std::mt19937_64 master(cfg.seed);
  std::vector<std::mt19937_64> rngs;
  for (int n = 0; n < N; ++n) rngs.emplace_back(master());

  std::vector<EstimationState> states(N);
  std::vector<GainField> gains(N, GainField::identity(X.bins, X.frames, M));
  ModelParams params;
  for (int n = 0; n < N; ++n) {
    SourceParams p;
    p.R = HermitianField::identity(X.bins, 1, M);
    params.push_back(std::move(p));
  }
  // placeholder variance 1 so Sigma_cn = I on the first E-step
  for (auto& p : params) {
    p.U = Mat::Ones(X.bins, 1);
    p.W = Mat::Ones(1, X.frames);
  }

  SeparationResult res;
  std::vector<int> cached_blocks(N, -1);
  std::vector<Mat> current_bases(N);
  std::vector<int> basis_of(N);
  for (int n = 0; n < N; ++n) basis_of[n] = n;
  if (cfg.mode == Mode::Informed) {
    // the cluster order follows the estimated delays, not the caller's basis
    // order: match each basis to the cluster it explains best
    if (N > 1 && N <= 8) {
      Mat cost(N, N);
      pipeline_detail::parallel_for(N, [&](int n) {
        const TensorViews v = tensor_views(empirical_covariance(c_hat[n], &cfg.neighborhood));
        for (int j = 0; j < N; ++j)
          cost(n, j) = pipeline_detail::basis_fit_cost(v.diag, bases[j], cfg.beta_s,
                                                       cfg.inner_iters);
      });
      basis_of = pipeline_detail::match_bases(cost);
    }
    for (int n = 0; n < N; ++n) current_bases[n] = bases[basis_of[n]];
  }

  for (int t = 0; t < cfg.outer_iters; ++t) {
    const int iters = t == 0 ? cfg.inner_iters_first : cfg.inner_iters;
    std::vector<int> detected_now(N, -1);
    std::vector<Vec> likelihood_now(N);
    const bool run_detect =
        cfg.mode == Mode::Detect && (t == 0 || cfg.redetect_every <= 1 || t % cfg.redetect_every == 0);

    pipeline_detail::parallel_for(N, [&](int n) {
      const HermitianField stats =
          estep_statistics(c_hat[n], gains[n], params, n, cfg.neighborhood);
      const TensorViews views = tensor_views(stats);

      if (cfg.mode == Mode::Blind) {
        current_bases[n] =
            extract_basis(views.diag, cfg.basis_size, cfg.beta_e, cfg.prior_iters, rngs[n]).data;
        states[n].W.resize(0, 0);  // basis changed shape/content: cold restart
      } else if (cfg.mode == Mode::Detect) {
        if (run_detect) {
          const ContributionVector cv =
              detect_contributions(views.diag, *lib, cfg.beta_d, cfg.prior_iters, rngs[n]);
          detected_now[n] = select_basis(cv);
          likelihood_now[n] = pipeline_detail::block_likelihood(cv);
        } else {
          detected_now[n] = cached_blocks[n];
        }
        if (detected_now[n] != cached_blocks[n]) {
          cached_blocks[n] = detected_now[n];
          current_bases[n] = lib->blocks[cached_blocks[n]].data;
          states[n].W.resize(0, 0);
        }
      }

      params[n] = estimate_source(views, current_bases[n], iters, cfg.beta_s, states[n], rngs[n],
                                  static_cast<int>(current_bases[n].cols()));
    });

    const HermitianField sx = sigma_x(params);
    pipeline_detail::parallel_for(N, [&](int n) {
      gains[n] = wiener_gain(params, n, sx, cfg.mu);
      c_hat[n] = apply_gain(gains[n], X);
    });

    res.objective.push_back(pipeline_detail::model_objective(sx, rx));
    if (cfg.mode == Mode::Detect) {
      res.detected.push_back(detected_now);
      res.block_likelihood.push_back(likelihood_now);
    }
    if (convergence_check(res.objective, cfg.convergence_tol)) {
      res.converged = true;
      break;
    }
  }

  // emit sources in the caller's basis order (informed mode may have
  // permuted the bases to match the initial clusters)
  std::vector<int> cluster_of(N);
  for (int n = 0; n < N; ++n) cluster_of[basis_of[n]] = n;
  for (int j = 0; j < N; ++j) {
    const int n = cluster_of[j];
    res.params.push_back(std::move(params[n]));
    res.images_tf.push_back(std::move(c_hat[n]));
    res.images.push_back(synthesize(res.images_tf.back(), cfg.stft, x.rows()));
  }
  return res;
}

}  // namespace ntfsep

#endif
