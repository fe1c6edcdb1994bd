#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "macgaze/gmm.hpp"
#include "macgaze/metrics.hpp"

using namespace macgaze;

namespace {

std::vector<Vec3> gaussian_cloud(const Vec3& mean, double sigma, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.emplace_back(mean + Vec3(g(rng), g(rng), g(rng)));
  return out;
}

// direct density evaluation used as an independent oracle
double max_comp_oracle(const GmmModel& g, const Vec3& x) {
  double best = 0.0;
  for (int k = 0; k < g.k(); ++k) {
    const Mat3& cov = g.covariances[static_cast<std::size_t>(k)];
    const Vec3 d = x - g.means[static_cast<std::size_t>(k)];
    const double det = cov.determinant();
    const double quad = d.transpose() * cov.inverse() * d;
    const double dens = g.weights[k] *
                        std::exp(-0.5 * quad) /
                        std::sqrt(std::pow(2.0 * std::numbers::pi, 3) * det);
    best = std::max(best, dens);
  }
  return best;
}

}  // namespace

TEST_CASE("single spherical Gaussian selects K=1 in at least 9/10 seeded runs") {
  int k1 = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    const auto xs = gaussian_cloud(Vec3(0.1, -0.2, 0.9), 0.5, 400, rng);
    GmmFitOptions opts;
    opts.k_max = 5;
    opts.seed = seed;
    const auto model = fit_gmm(xs, opts);
    if (model.k() == 1) ++k1;
  }
  CHECK(k1 >= 9);
}

TEST_CASE("three well-separated Gaussians are recovered with NMI >= 0.95") {
  std::mt19937_64 rng(7);
  const double sigma = 0.1;
  std::vector<Vec3> xs;
  std::vector<int> truth;
  const Vec3 centers[3] = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2, 2)};  // >= 10 sigma apart
  for (int c = 0; c < 3; ++c) {
    const auto cloud = gaussian_cloud(centers[c], sigma, 200, rng);
    xs.insert(xs.end(), cloud.begin(), cloud.end());
    truth.insert(truth.end(), 200, c);
  }
  GmmFitOptions opts;
  opts.k_max = 6;
  opts.seed = 3;
  const auto model = fit_gmm(xs, opts);
  CHECK(model.k() == 3);
  const auto assign = gmm_assign(model, xs);
  CHECK(nmi(truth, assign) >= 0.95);
}

TEST_CASE("EM log-likelihood is non-decreasing on 100 random datasets") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> n_dist(30, 200), k_dist(1, 4);
  std::uniform_real_distribution<double> c_dist(-2.0, 2.0), s_dist(0.2, 1.5);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Vec3> xs;
    const int modes = k_dist(rng);
    for (int m = 0; m < modes; ++m) {
      const Vec3 c(c_dist(rng), c_dist(rng), c_dist(rng));
      const auto cloud = gaussian_cloud(c, s_dist(rng), n_dist(rng), rng);
      xs.insert(xs.end(), cloud.begin(), cloud.end());
    }
    GmmFitOptions opts;
    opts.seed = static_cast<std::uint64_t>(rep);
    const auto res = fit_gmm_fixed_k(xs, k_dist(rng), opts);
    for (std::size_t i = 1; i < res.log_likelihood_path.size(); ++i)
      CHECK(res.log_likelihood_path[i] >= res.log_likelihood_path[i - 1] - 1e-8);
  }
}

TEST_CASE("max_component_likelihood closed form and shape") {
  GmmModel g;
  g.weights = VecX::Ones(1);
  g.means = {Vec3::Zero()};
  g.covariances = {Mat3::Identity()};

  SUBCASE("standard normal at the origin") {
    const double expect = std::pow(2.0 * std::numbers::pi, -1.5);
    CHECK(g.max_component_likelihood(Vec3::Zero()) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.06349).epsilon(1e-4));
  }
  SUBCASE("density decays monotonically along a ray") {
    double prev = g.max_component_likelihood(Vec3::Zero());
    for (int i = 1; i <= 20; ++i) {
      const double cur = g.max_component_likelihood(Vec3(0.3 * i, 0, 0));
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("max_component_likelihood agrees with a direct re-evaluation") {
  std::mt19937_64 rng(9);
  const auto a = gaussian_cloud(Vec3(0, 0, 1), 0.3, 150, rng);
  const auto b = gaussian_cloud(Vec3(1, 1, 0), 0.5, 150, rng);
  std::vector<Vec3> xs = a;
  xs.insert(xs.end(), b.begin(), b.end());
  GmmFitOptions opts;
  opts.seed = 1;
  opts.k_max = 4;
  const auto model = fit_gmm(xs, opts);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x(g(rng), g(rng), g(rng));
    const double lib = model.max_component_likelihood(x);
    const double oracle = max_comp_oracle(model, x);
    CHECK(std::abs(lib - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("outlier ratio semantics") {
  std::mt19937_64 rng(31);
  const auto train = gaussian_cloud(Vec3(0.2, 0.9, 0.1), 0.2, 600, rng);
  GmmFitOptions opts;
  opts.seed = 5;
  const auto model = fit_gmm(train, opts);

  SUBCASE("in-distribution data sits near the 5% level at tau_i = 0.95") {
    const auto fresh = gaussian_cloud(Vec3(0.2, 0.9, 0.1), 0.2, 500, rng);
    const double r = outlier_ratio(model, fresh, 0.95);
    CHECK(r >= 0.02 - 1e-12);
    CHECK(r <= 0.08 + 1e-12);
  }
  SUBCASE("a 20-sigma shift is fully novel") {
    const auto shifted = gaussian_cloud(Vec3(0.2 + 4.0, 0.9, 0.1), 0.2, 200, rng);
    CHECK(outlier_ratio(model, shifted, 0.95) == 1.0);
  }
  SUBCASE("training samples themselves stay at or below the cutoff level") {
    CHECK(outlier_ratio(model, train, 0.95) <= 0.05 + 1e-9);
  }
  SUBCASE("r_t lies in [0,1] and is non-increasing in the confidence level") {
    const auto probe = gaussian_cloud(Vec3(0.2, 0.9, 0.4), 0.4, 300, rng);
    double prev = 1.1;
    for (double tau_i : {0.75, 0.80, 0.85, 0.90, 0.95}) {
      const double r = outlier_ratio(model, probe, tau_i);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
      CHECK(r <= prev + 1e-12);  // higher tau_i -> lower cutoff -> fewer outliers
      prev = r;
    }
  }
  SUBCASE("unfitted model is a state error") {
    GmmModel unfit;
    CHECK_THROWS_AS(outlier_ratio(unfit, train, 0.95), std::logic_error);
  }
}

TEST_CASE("degenerate identical samples fit as a single ridge-regularized component") {
  std::vector<Vec3> xs(50, Vec3(0.5, 0.5, 0.5));
  GmmFitOptions opts;
  opts.seed = 2;
  const auto model = fit_gmm(xs, opts);
  CHECK(model.k() == 1);
  CHECK(model.covariances[0](0, 0) >= opts.ridge - 1e-15);
  CHECK(std::isfinite(model.max_component_likelihood(Vec3(0.5, 0.5, 0.5))));
}

TEST_CASE("fit_gmm precondition") {
  std::vector<Vec3> xs(5, Vec3::Zero());
  CHECK_THROWS_AS(fit_gmm(xs), std::invalid_argument);
}
