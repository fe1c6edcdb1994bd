#include "macgaze/metrics.hpp"

#include <array>
#include <cmath>
#include <map>

namespace macgaze {

ErrorStats stats_of(const std::vector<double>& distances) {
  if (distances.empty()) throw std::invalid_argument("need at least one sample");
  ErrorStats s;
  s.n = distances.size();
  double sum = 0.0;
  for (double d : distances) sum += d;
  s.mean = sum / static_cast<double>(s.n);
  double var = 0.0;
  for (double d : distances) var += (d - s.mean) * (d - s.mean);
  s.std = std::sqrt(var / static_cast<double>(s.n));
  return s;
}

ErrorStats euclidean_error(const std::vector<Vec2>& preds, const std::vector<Vec2>& truths) {
  if (preds.size() != truths.size())
    throw std::invalid_argument("euclidean_error: length mismatch");
  if (preds.empty()) throw std::invalid_argument("euclidean_error: need at least one pair");
  std::vector<double> d(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) d[i] = (preds[i] - truths[i]).norm();
  return stats_of(d);
}

double nmi(const std::vector<int>& labels, const std::vector<int>& clusters) {
  if (labels.size() != clusters.size())
    throw std::invalid_argument("nmi: length mismatch");
  if (labels.empty()) throw std::invalid_argument("nmi: need at least one sample");
  const double n = static_cast<double>(labels.size());
  std::map<int, double> py, pc;
  std::map<std::pair<int, int>, double> pyc;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    py[labels[i]] += 1.0;
    pc[clusters[i]] += 1.0;
    pyc[{labels[i], clusters[i]}] += 1.0;
  }
  double hy = 0.0, hc = 0.0, mi = 0.0;
  for (auto& [y, cnt] : py) {
    const double p = cnt / n;
    hy -= p * std::log(p);
  }
  for (auto& [c, cnt] : pc) {
    const double p = cnt / n;
    hc -= p * std::log(p);
  }
  for (auto& [yc, cnt] : pyc) {
    const double p = cnt / n;
    const double marg = (py[yc.first] / n) * (pc[yc.second] / n);
    mi += p * std::log(p / marg);
  }
  const double denom = hy + hc;
  if (denom <= 0.0) return 0.0;
  return 2.0 * mi / denom;
}

double macro_f1(const std::vector<int>& labels, const std::vector<int>& preds) {
  if (labels.size() != preds.size())
    throw std::invalid_argument("macro_f1: length mismatch");
  std::map<int, std::array<double, 3>> counts;  // class -> {tp, fp, fn}
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == preds[i]) {
      counts[labels[i]][0] += 1.0;
    } else {
      counts[preds[i]][1] += 1.0;
      counts[labels[i]][2] += 1.0;
    }
  }
  if (counts.empty()) return 0.0;
  double sum = 0.0;
  for (auto& [cls, c] : counts) {
    const double denom = 2.0 * c[0] + c[1] + c[2];
    sum += denom > 0.0 ? 2.0 * c[0] / denom : 0.0;
  }
  return sum / static_cast<double>(counts.size());
}

}  // namespace macgaze
