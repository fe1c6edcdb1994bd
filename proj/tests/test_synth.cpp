#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "macgaze/metrics.hpp"
#include "macgaze/synth.hpp"

using namespace macgaze;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("same config and seed give byte-identical sessions") {
  auto cfg = make_default_config(3, 24, 5.0, 99);
  const auto a = generate_session(cfg);
  const auto b = generate_session(cfg);
  const auto pa = tmp_path("det_a.jsonl");
  const auto pb = tmp_path("det_b.jsonl");
  save_session(a, pa, "jsonl");
  save_session(b, pb, "jsonl");
  CHECK(slurp(pa) == slurp(pb));
}

TEST_CASE("zero bias and zero base noise give exactly zero base error") {
  auto cfg = make_default_config(2, 8, 2.0, 4);
  for (auto& p : cfg.profiles) {
    p.base_bias = Vec2::Zero();
    p.base_noise_std = 0.0;
  }
  const auto s = generate_session(cfg);
  for (const auto& f : s.frames) CHECK((*f.base_prediction - *f.gaze).norm() == 0.0);
}

TEST_CASE("base error matches a Monte-Carlo oracle of the biased norm within 2%") {
  auto cfg = make_default_config(1, 4, 240.0, 21);  // 12000 frames of one motion
  cfg.profiles[0].base_bias = Vec2(1.2, 0.0);
  cfg.profiles[0].base_noise_std = 0.5;
  const auto s = generate_session(cfg);
  REQUIRE(s.frames.size() >= 10000);
  double mean = 0.0;
  for (const auto& f : s.frames) mean += (*f.base_prediction - *f.gaze).norm();
  mean /= static_cast<double>(s.frames.size());

  // independent Monte-Carlo estimate of E || (1.2, 0) + N(0, 0.5^2 I) ||
  std::mt19937_64 rng(555);
  std::normal_distribution<double> g(0.0, 0.5);
  double oracle = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) oracle += std::hypot(1.2 + g(rng), g(rng));
  oracle /= n;

  CHECK(std::abs(mean - oracle) / oracle < 0.02);
}

TEST_CASE("noiseless features invert exactly through the oracle") {
  auto cfg = make_default_config(4, 32, 2.0, 13);
  cfg.feature_noise_std = 0.0;
  const auto s = generate_session(cfg);
  const GazeOracle oracle(cfg);
  double worst = 0.0;
  for (const auto& f : s.frames) {
    const Vec2 rec = oracle.invert(*f.motion_label, f.feature);
    worst = std::max(worst, (rec - *f.gaze).norm());
  }
  CHECK(worst < 1e-9);
}

namespace {

// least-squares affine calibrator (feature -> gaze), used as the
// mismatch-penalty probe
struct AffineFit {
  MatX w;  // 2 x (d+1)
  Vec2 predict(const VecX& f) const {
    VecX aug(f.size() + 1);
    aug << f, 1.0;
    return w * aug;
  }
};

AffineFit fit_affine(const std::vector<VecX>& feats, const std::vector<Vec2>& gazes) {
  const auto n = static_cast<Eigen::Index>(feats.size());
  const auto d = feats.front().size();
  MatX a(n, d + 1);
  MatX y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i).head(d) = feats[static_cast<std::size_t>(i)].transpose();
    a(i, d) = 1.0;
    y.row(i) = gazes[static_cast<std::size_t>(i)].transpose();
  }
  AffineFit fit;
  fit.w = a.colPivHouseholderQr().solve(y).transpose();
  return fit;
}

}  // namespace

TEST_CASE("motion mismatch strictly raises linear-calibrator error across 10 seeds") {
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = make_default_config(2, 32, 12.0, seed);
    const auto s = generate_session(cfg);
    std::vector<VecX> f0, f1;
    std::vector<Vec2> g0, g1;
    for (const auto& f : s.frames) {
      if (*f.motion_label == cfg.segments[0].label) {
        f0.push_back(f.feature);
        g0.push_back(*f.gaze);
      } else {
        f1.push_back(f.feature);
        g1.push_back(*f.gaze);
      }
    }
    const auto fit = fit_affine(f0, g0);
    double matched = 0.0, mismatched = 0.0;
    for (std::size_t i = 0; i < f0.size(); ++i) matched += (fit.predict(f0[i]) - g0[i]).norm();
    for (std::size_t i = 0; i < f1.size(); ++i) mismatched += (fit.predict(f1[i]) - g1[i]).norm();
    matched /= static_cast<double>(f0.size());
    mismatched /= static_cast<double>(f1.size());
    if (mismatched > matched) ++hits;
  }
  CHECK(hits == 10);
}

TEST_CASE("har window sampler is deterministic and balanced") {
  auto cfg = make_default_config(4, 8, 2.0, 3);
  const auto a = sample_har_windows(cfg.profiles, 5, 16, 50.0, 7);
  const auto b = sample_har_windows(cfg.profiles, 5, 16, 50.0, 7);
  REQUIRE(a.windows.size() == 5 * cfg.profiles.size());
  CHECK(a.class_names.size() == cfg.profiles.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    CHECK(a.windows[i].samples == b.windows[i].samples);
    CHECK(a.labels[i] == b.labels[i]);
  }
}

TEST_CASE("rgbdgaze csv ingestion") {
  const auto dir = tmp_path("rgbd_in");
  fs::create_directories(dir);

  SUBCASE("2-row minimal CSV with all columns loads as a 2-frame session") {
    std::ofstream out(fs::path(dir) / "p01_frames.csv");
    out << "t,gx,gy,ax,ay,az,posture,f0,f1\n";
    out << "0.0,1.0,2.0,0.0,0.1,1.0,sitting,0.5,0.6\n";
    out << "0.02,1.1,2.1,0.0,0.1,1.0,sitting,0.55,0.65\n";
    out.close();
    const auto sessions = ingest_rgbdgaze_csv(dir);
    REQUIRE(sessions.size() == 1);
    CHECK(sessions[0].frames.size() == 2);
    CHECK(sessions[0].feature_dim() == 2);
    CHECK(sessions[0].meta.participant == "p01");
    REQUIRE(sessions[0].meta.segments.size() == 1);
    CHECK(sessions[0].meta.segments[0].label == "sitting");
    fs::remove(fs::path(dir) / "p01_frames.csv");
  }

  SUBCASE("missing gaze columns produce a schema error naming them") {
    std::ofstream out(fs::path(dir) / "p02_frames.csv");
    out << "t,ax,ay,az,posture,f0\n0.0,0,0,1,sitting,0.5\n";
    out.close();
    try {
      ingest_rgbdgaze_csv(dir);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("gx") != std::string::npos);
      CHECK(msg.find("gy") != std::string::npos);
    }
    fs::remove(fs::path(dir) / "p02_frames.csv");
  }

  SUBCASE("100 Hz IMU sidecar is linearly resampled onto 50 Hz frames") {
    {
      std::ofstream out(fs::path(dir) / "p03_frames.csv");
      out << "t,gx,gy,posture,f0\n";
      for (int i = 0; i < 10; ++i)
        out << i * 0.02 << ",0.0,0.0,sitting,1.0\n";
    }
    {
      std::ofstream out(fs::path(dir) / "p03_imu.csv");
      out << "t,ax,ay,az\n";
      for (int i = 0; i < 20; ++i)
        out << i * 0.01 << ',' << i * 1.0 << ',' << i * 2.0 << ',' << i * 3.0 << "\n";
    }
    const auto sessions = ingest_rgbdgaze_csv(dir);
    REQUIRE(sessions.size() == 1);
    const auto& s = sessions[0];
    // independent interpolation oracle: acc at t = i*0.02 is sample 2i exactly
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      const double expect = 2.0 * static_cast<double>(i);
      CHECK(s.frames[i].imu.acc.x() == doctest::Approx(expect).epsilon(1e-12));
      CHECK(s.frames[i].imu.acc.y() == doctest::Approx(2.0 * expect).epsilon(1e-12));
    }
    fs::remove(fs::path(dir) / "p03_frames.csv");
    fs::remove(fs::path(dir) / "p03_imu.csv");
  }
}

TEST_CASE("config validation rejects inseparable profiles") {
  auto cfg = make_default_config(2, 8, 2.0, 1);
  cfg.profiles[1].imu_mean = cfg.profiles[0].imu_mean;
  cfg.profiles[1].oscillation = cfg.profiles[0].oscillation;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
