#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "macgaze/metrics.hpp"

using namespace macgaze;

TEST_CASE("euclidean_error basics") {
  CHECK(euclidean_error({Vec2(1, 2)}, {Vec2(1, 2)}).mean == 0.0);
  const auto st = euclidean_error({Vec2(0, 0)}, {Vec2(3, 4)});
  CHECK(st.mean == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(st.std == 0.0);
  CHECK_THROWS_AS(euclidean_error({Vec2(0, 0)}, {}), std::invalid_argument);
}

TEST_CASE("euclidean_error matches an independent recomputation on random pairs") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<Vec2> preds, truths;
  for (int i = 0; i < 1000; ++i) {
    preds.emplace_back(g(rng), g(rng));
    truths.emplace_back(g(rng), g(rng));
  }
  const auto st = euclidean_error(preds, truths);
  // second implementation: hypot accumulation and two-pass variance
  double mean = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    mean += std::hypot(preds[i].x() - truths[i].x(), preds[i].y() - truths[i].y());
  mean /= static_cast<double>(preds.size());
  double var = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = std::hypot(preds[i].x() - truths[i].x(), preds[i].y() - truths[i].y());
    var += (d - mean) * (d - mean);
  }
  var /= static_cast<double>(preds.size());
  CHECK(std::abs(st.mean - mean) < 1e-12);
  CHECK(std::abs(st.std - std::sqrt(var)) < 1e-12);
}

namespace {

// contingency-table NMI oracle, written independently of the library path
double nmi_oracle(const std::vector<int>& y, const std::vector<int>& c) {
  const double n = static_cast<double>(y.size());
  std::map<int, int> cy, cc;
  std::map<std::pair<int, int>, int> joint;
  for (std::size_t i = 0; i < y.size(); ++i) {
    cy[y[i]]++;
    cc[c[i]]++;
    joint[{y[i], c[i]}]++;
  }
  auto entropy = [&](const std::map<int, int>& m) {
    double h = 0.0;
    for (const auto& [k, v] : m) {
      const double p = v / n;
      if (p > 0) h -= p * std::log(p);
    }
    return h;
  };
  double mi = 0.0;
  for (const auto& [yc, v] : joint) {
    const double pxy = v / n;
    const double px = cy[yc.first] / n;
    const double pc = cc[yc.second] / n;
    mi += pxy * std::log(pxy / (px * pc));
  }
  const double denom = entropy(cy) + entropy(cc);
  return denom > 0 ? 2.0 * mi / denom : 0.0;
}

}  // namespace

TEST_CASE("nmi basics") {
  CHECK(nmi({0, 0, 1, 1, 2}, {0, 0, 1, 1, 2}) == doctest::Approx(1.0).epsilon(1e-12));
  // relabeled but identical partition is still 1
  CHECK(nmi({0, 0, 1, 1}, {7, 7, 3, 3}) == doctest::Approx(1.0).epsilon(1e-12));
  // single cluster against balanced labels: I = 0
  CHECK(nmi({0, 1, 0, 1}, {0, 0, 0, 0}) == doctest::Approx(0.0));
  // degenerate: both single-class
  CHECK(nmi({0, 0}, {1, 1}) == 0.0);
}

TEST_CASE("nmi agrees with the contingency oracle on 100 random instances") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> labels(0, 2), clusters(0, 3), len(5, 200);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = len(rng);
    std::vector<int> y(n), c(n);
    for (int i = 0; i < n; ++i) {
      y[i] = labels(rng);
      c[i] = clusters(rng);
    }
    CHECK(std::abs(nmi(y, c) - nmi_oracle(y, c)) < 1e-10);
  }
}

namespace {

double macro_f1_oracle(const std::vector<int>& y, const std::vector<int>& p) {
  std::map<int, int> tp, fp, fn;
  std::map<int, bool> present;
  for (std::size_t i = 0; i < y.size(); ++i) {
    present[y[i]] = true;
    present[p[i]] = true;
    if (y[i] == p[i])
      tp[y[i]]++;
    else {
      fp[p[i]]++;
      fn[y[i]]++;
    }
  }
  double sum = 0.0;
  int cnt = 0;
  for (const auto& [cls, _] : present) {
    const double denom = 2.0 * tp[cls] + fp[cls] + fn[cls];
    sum += denom > 0 ? 2.0 * tp[cls] / denom : 0.0;
    ++cnt;
  }
  return cnt ? sum / cnt : 0.0;
}

}  // namespace

TEST_CASE("macro_f1 basics") {
  CHECK(macro_f1({0, 1, 2, 0}, {0, 1, 2, 0}) == 1.0);
  // constructed: per class TP=1, FP=1, FN=1 -> per-class F1 = 0.5
  CHECK(macro_f1({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(macro_f1({0}, {}), std::invalid_argument);
}

TEST_CASE("macro_f1 agrees with the count oracle on random instances") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cls(0, 4), len(1, 100);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = len(rng);
    std::vector<int> y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y[i] = cls(rng);
      p[i] = cls(rng);
    }
    CHECK(std::abs(macro_f1(y, p) - macro_f1_oracle(y, p)) < 1e-12);
  }
}
