#pragma once

#include <vector>

#include "macgaze/common.hpp"

namespace macgaze {

/// Full-covariance Gaussian mixture over raw 3-axis IMU samples.
struct GmmModel {
  VecX weights;                            // K, sums to 1
  std::vector<Vec3> means;                 // K
  std::vector<Mat3> covariances;           // K, PSD (ridge-regularized)
  std::vector<double> train_likelihoods;   // sorted max-component likelihoods
                                           // of the samples the model was fit on

  int k() const { return static_cast<int>(means.size()); }
  bool fitted() const { return k() > 0; }

  /// p_r = max_k pi_k N(x | mu_k, Sigma_k).
  double max_component_likelihood(const Vec3& x) const;
  double log_max_component_likelihood(const Vec3& x) const;

  /// Empirical (1 - tau_i) quantile of the training likelihood table:
  /// the density level that (tau_i * 100)% of known data exceeds.
  double likelihood_cutoff(double tau_i) const;
};

struct GmmFitOptions {
  int k_max = 10;
  std::uint64_t seed = 0;
  double ridge = 1e-6;
  int max_iters = 200;
  double rel_tol = 1e-8;
  int kmeans_iters = 25;
};

struct GmmFitResult {
  GmmModel model;
  std::vector<double> log_likelihood_path;  // per EM iteration of the selected K
  double bic = 0.0;
};

/// EM for each K in 1..k_max from a k-means++ start, best K by BIC.
/// The candidate range is clamped so each component sees >= 10 samples.
GmmFitResult fit_gmm_detailed(const std::vector<Vec3>& samples, const GmmFitOptions& opts = {});
GmmModel fit_gmm(const std::vector<Vec3>& samples, const GmmFitOptions& opts = {});

/// Single-K EM (exposed for monotonicity checks).
GmmFitResult fit_gmm_fixed_k(const std::vector<Vec3>& samples, int k, const GmmFitOptions& opts = {});

/// Most likely component index per sample (for clustering metrics).
std::vector<int> gmm_assign(const GmmModel& g, const std::vector<Vec3>& samples);

/// Fraction of samples whose max-component likelihood falls below the
/// cutoff derived from the training quantile table at level tau_i.
double outlier_ratio(const GmmModel& g, const std::vector<Vec3>& samples, double tau_i);

/// Linear-interpolation quantile of a sorted table, q in [0,1].
double sorted_quantile(const std::vector<double>& sorted, double q);

}  // namespace macgaze
