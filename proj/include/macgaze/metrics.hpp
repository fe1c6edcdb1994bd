#pragma once

#include <vector>

#include "macgaze/common.hpp"

namespace macgaze {

struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;  // population std of per-sample distances
  std::size_t n = 0;
};

/// Mean (and population std) of per-sample Euclidean distances between
/// predicted and true gaze points.
ErrorStats euclidean_error(const std::vector<Vec2>& preds, const std::vector<Vec2>& truths);

ErrorStats stats_of(const std::vector<double>& distances);

/// Normalized mutual information 2*I(Y;C) / (H(Y)+H(C)) with natural-log
/// entropies; 0 when both partitions are single-cluster.
double nmi(const std::vector<int>& labels, const std::vector<int>& clusters);

/// Unweighted mean of per-class F1 over classes present in labels or preds.
double macro_f1(const std::vector<int>& labels, const std::vector<int>& preds);

}  // namespace macgaze
