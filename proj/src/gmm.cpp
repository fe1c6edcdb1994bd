#include "macgaze/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace macgaze {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

struct CompCache {
  Mat3 cov_inv_l;  // L^{-1} with Sigma = L L^T
  double log_norm;  // log(pi_k) - 0.5*logdet - (3/2) log(2 pi)
};

std::vector<CompCache> build_cache(const GmmModel& g) {
  std::vector<CompCache> cache(static_cast<std::size_t>(g.k()));
  for (int k = 0; k < g.k(); ++k) {
    Eigen::LLT<Mat3> llt(g.covariances[static_cast<std::size_t>(k)]);
    if (llt.info() != Eigen::Success)
      throw std::logic_error("GMM covariance not positive definite");
    const Mat3 l = llt.matrixL();
    double logdet = 0.0;
    for (int i = 0; i < 3; ++i) logdet += 2.0 * std::log(l(i, i));
    CompCache c;
    c.cov_inv_l = l.inverse();
    const double w = g.weights[k];
    c.log_norm = (w > 0 ? std::log(w) : -std::numeric_limits<double>::infinity()) -
                 0.5 * logdet - 1.5 * kLog2Pi;
    cache[static_cast<std::size_t>(k)] = c;
  }
  return cache;
}

double log_max_comp(const GmmModel& g, const std::vector<CompCache>& cache, const Vec3& x) {
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < g.k(); ++k) {
    const Vec3 z = cache[static_cast<std::size_t>(k)].cov_inv_l *
                   (x - g.means[static_cast<std::size_t>(k)]);
    best = std::max(best, cache[static_cast<std::size_t>(k)].log_norm - 0.5 * z.squaredNorm());
  }
  return best;
}

}  // namespace

double GmmModel::log_max_component_likelihood(const Vec3& x) const {
  if (!fitted()) throw std::logic_error("GMM not fitted");
  return log_max_comp(*this, build_cache(*this), x);
}

double GmmModel::max_component_likelihood(const Vec3& x) const {
  return std::exp(log_max_component_likelihood(x));
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty table");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double GmmModel::likelihood_cutoff(double tau_i) const {
  if (!fitted() || train_likelihoods.empty())
    throw std::logic_error("GMM has no training likelihood table");
  if (!(tau_i > 0.0 && tau_i < 1.0)) throw std::invalid_argument("tau_i must be in (0,1)");
  return sorted_quantile(train_likelihoods, 1.0 - tau_i);
}

double outlier_ratio(const GmmModel& g, const std::vector<Vec3>& samples, double tau_i) {
  if (samples.empty()) throw std::invalid_argument("outlier_ratio: empty sample set");
  const double cutoff = g.likelihood_cutoff(tau_i);
  const auto cache = build_cache(g);
  std::size_t below = 0;
  for (const auto& x : samples)
    if (std::exp(log_max_comp(g, cache, x)) < cutoff) ++below;
  return static_cast<double>(below) / static_cast<double>(samples.size());
}

std::vector<int> gmm_assign(const GmmModel& g, const std::vector<Vec3>& samples) {
  const auto cache = build_cache(g);
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& x : samples) {
    int best_k = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < g.k(); ++k) {
      const Vec3 z = cache[static_cast<std::size_t>(k)].cov_inv_l *
                     (x - g.means[static_cast<std::size_t>(k)]);
      const double lp = cache[static_cast<std::size_t>(k)].log_norm - 0.5 * z.squaredNorm();
      if (lp > best) {
        best = lp;
        best_k = k;
      }
    }
    out.push_back(best_k);
  }
  return out;
}

namespace {

std::vector<Vec3> kmeans_pp(const std::vector<Vec3>& xs, int k, std::mt19937_64& rng,
                            int iters) {
  const auto n = xs.size();
  std::uniform_int_distribution<std::size_t> uni(0, n - 1);
  std::vector<Vec3> centers;
  centers.push_back(xs[uni(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (xs[i] - c).squaredNorm());
      d2[i] = best;
      sum += best;
    }
    if (sum <= 0.0) {
      centers.push_back(xs[uni(rng)]);  // degenerate data, any point works
      continue;
    }
    std::uniform_real_distribution<double> ur(0.0, sum);
    double r = ur(rng);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(xs[pick]);
  }

  std::vector<int> assign(n, 0);
  for (int it = 0; it < iters; ++it) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best_k = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int kk = 0; kk < k; ++kk) {
        const double d = (xs[i] - centers[static_cast<std::size_t>(kk)]).squaredNorm();
        if (d < best) {
          best = d;
          best_k = kk;
        }
      }
      if (assign[i] != best_k) {
        assign[i] = best_k;
        moved = true;
      }
    }
    std::vector<Vec3> sums(static_cast<std::size_t>(k), Vec3::Zero());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(assign[i])] += xs[i];
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (int kk = 0; kk < k; ++kk) {
      if (counts[static_cast<std::size_t>(kk)] == 0) {
        // move an empty cluster onto the point farthest from its center
        std::size_t far = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d =
              (xs[i] - centers[static_cast<std::size_t>(assign[i])]).squaredNorm();
          if (d > best) {
            best = d;
            far = i;
          }
        }
        centers[static_cast<std::size_t>(kk)] = xs[far];
        moved = true;
      } else {
        centers[static_cast<std::size_t>(kk)] =
            sums[static_cast<std::size_t>(kk)] / static_cast<double>(counts[static_cast<std::size_t>(kk)]);
      }
    }
    if (!moved) break;
  }
  return centers;
}

GmmModel init_from_kmeans(const std::vector<Vec3>& xs, const std::vector<Vec3>& centers,
                          double ridge) {
  const int k = static_cast<int>(centers.size());
  const auto n = xs.size();
  std::vector<int> assign(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best_k = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int kk = 0; kk < k; ++kk) {
      const double d = (xs[i] - centers[static_cast<std::size_t>(kk)]).squaredNorm();
      if (d < best) {
        best = d;
        best_k = kk;
      }
    }
    assign[i] = best_k;
  }
  GmmModel g;
  g.weights.resize(k);
  g.means.resize(static_cast<std::size_t>(k));
  g.covariances.resize(static_cast<std::size_t>(k));
  Mat3 global_cov = Mat3::Zero();
  Vec3 global_mean = Vec3::Zero();
  for (const auto& x : xs) global_mean += x;
  global_mean /= static_cast<double>(n);
  for (const auto& x : xs) global_cov += (x - global_mean) * (x - global_mean).transpose();
  global_cov /= static_cast<double>(n);

  for (int kk = 0; kk < k; ++kk) {
    Vec3 mean = Vec3::Zero();
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (assign[i] == kk) {
        mean += xs[i];
        ++cnt;
      }
    if (cnt == 0) {
      g.weights[kk] = 1e-6;
      g.means[static_cast<std::size_t>(kk)] = centers[static_cast<std::size_t>(kk)];
      g.covariances[static_cast<std::size_t>(kk)] = global_cov + ridge * Mat3::Identity();
      continue;
    }
    mean /= static_cast<double>(cnt);
    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < n; ++i)
      if (assign[i] == kk) cov += (xs[i] - mean) * (xs[i] - mean).transpose();
    cov /= static_cast<double>(cnt);
    g.weights[kk] = static_cast<double>(cnt) / static_cast<double>(n);
    g.means[static_cast<std::size_t>(kk)] = mean;
    g.covariances[static_cast<std::size_t>(kk)] = cov + ridge * Mat3::Identity();
  }
  g.weights /= g.weights.sum();
  return g;
}

double log_sum_exp(const VecX& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

GmmFitResult fit_gmm_fixed_k(const std::vector<Vec3>& samples, int k, const GmmFitOptions& opts) {
  const auto n = samples.size();
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n < static_cast<std::size_t>(k)) throw std::invalid_argument("fewer samples than components");

  auto rng = substream(opts.seed, "gmm-init", static_cast<std::uint64_t>(k));
  GmmModel g = init_from_kmeans(samples, kmeans_pp(samples, k, rng, opts.kmeans_iters), opts.ridge);

  GmmFitResult res;
  MatX log_resp(static_cast<Eigen::Index>(n), k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // E-step
    const auto cache = build_cache(g);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      VecX lp(k);
      for (int kk = 0; kk < k; ++kk) {
        const Vec3 z = cache[static_cast<std::size_t>(kk)].cov_inv_l *
                       (samples[i] - g.means[static_cast<std::size_t>(kk)]);
        lp[kk] = cache[static_cast<std::size_t>(kk)].log_norm - 0.5 * z.squaredNorm();
      }
      const double lse = log_sum_exp(lp);
      ll += lse;
      log_resp.row(static_cast<Eigen::Index>(i)) = (lp.array() - lse).transpose();
    }
    res.log_likelihood_path.push_back(ll);
    if (iter > 0 && std::abs(ll - prev_ll) <= opts.rel_tol * (std::abs(prev_ll) + 1.0)) break;
    prev_ll = ll;

    // M-step
    for (int kk = 0; kk < k; ++kk) {
      double nk = 0.0;
      Vec3 mean = Vec3::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(log_resp(static_cast<Eigen::Index>(i), kk));
        nk += r;
        mean += r * samples[i];
      }
      if (nk < 1e-12) {
        g.weights[kk] = 1e-12;
        continue;  // starved component, keep previous parameters
      }
      mean /= nk;
      Mat3 cov = Mat3::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(log_resp(static_cast<Eigen::Index>(i), kk));
        cov += r * (samples[i] - mean) * (samples[i] - mean).transpose();
      }
      cov /= nk;
      g.weights[kk] = nk / static_cast<double>(n);
      g.means[static_cast<std::size_t>(kk)] = mean;
      g.covariances[static_cast<std::size_t>(kk)] = cov + opts.ridge * Mat3::Identity();
    }
    g.weights /= g.weights.sum();
  }

  const double ll = res.log_likelihood_path.back();
  const double params = static_cast<double>(k - 1 + 3 * k + 6 * k);
  res.bic = -2.0 * ll + params * std::log(static_cast<double>(n));

  const auto cache = build_cache(g);
  g.train_likelihoods.reserve(n);
  for (const auto& x : samples)
    g.train_likelihoods.push_back(std::exp(log_max_comp(g, cache, x)));
  std::sort(g.train_likelihoods.begin(), g.train_likelihoods.end());
  res.model = std::move(g);
  return res;
}

GmmFitResult fit_gmm_detailed(const std::vector<Vec3>& samples, const GmmFitOptions& opts) {
  if (samples.size() < 10) throw std::invalid_argument("fit_gmm needs at least 10 samples");
  const int k_cap = std::max(1, std::min(opts.k_max, static_cast<int>(samples.size() / 10)));
  GmmFitResult best;
  bool have = false;
  for (int k = 1; k <= k_cap; ++k) {
    GmmFitResult r = fit_gmm_fixed_k(samples, k, opts);
    if (!have || r.bic < best.bic) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

GmmModel fit_gmm(const std::vector<Vec3>& samples, const GmmFitOptions& opts) {
  return fit_gmm_detailed(samples, opts).model;
}

}  // namespace macgaze
