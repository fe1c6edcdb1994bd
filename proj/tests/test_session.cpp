#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "macgaze/session.hpp"
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

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

bool frames_equal(const SessionStream& a, const SessionStream& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    const auto& fa = a.frames[i];
    const auto& fb = b.frames[i];
    if (fa.t != fb.t || fa.imu.acc != fb.imu.acc || fa.feature != fb.feature) return false;
    if (fa.gaze.has_value() != fb.gaze.has_value()) return false;
    if (fa.gaze && *fa.gaze != *fb.gaze) return false;
    if (fa.motion_label != fb.motion_label) return false;
    if (fa.base_prediction.has_value() != fb.base_prediction.has_value()) return false;
    if (fa.base_prediction && *fa.base_prediction != *fb.base_prediction) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("load_session parses a minimal JSONL file") {
  const auto path = tmp_path("mini_session.jsonl");
  write_file(path,
             R"({"participant":"p1","hz":50.0,"screen_cm":[7.0,14.0],"segments":[{"label":"sitting","start":0.0,"end":1.0}]}
{"t":0.0,"acc":[0.0,0.1,1.0],"feature":[1.0,2.0],"gaze":[0.5,-0.5],"motion":"sitting","base_pred":[0.6,-0.4]}
{"t":0.02,"acc":[0.0,0.1,1.0],"feature":[1.5,2.5],"gaze":null,"motion":null,"base_pred":null}
{"t":0.04,"acc":[0.0,0.2,0.9],"feature":[2.0,3.0],"gaze":[1.0,1.0],"motion":"sitting","base_pred":[1.0,1.2]}
)");
  const auto s = load_session(path, "jsonl");
  CHECK(s.frames.size() == 3);
  CHECK(s.feature_dim() == 2);
  CHECK(s.meta.participant == "p1");
  CHECK(s.meta.segments.size() == 1);
  CHECK(s.frames[0].gaze.has_value());
  CHECK_FALSE(s.frames[1].gaze.has_value());
  CHECK(s.frames[2].feature[1] == doctest::Approx(3.0));
}

TEST_CASE("load_session rejects non-monotone timestamps citing the line") {
  const auto path = tmp_path("bad_t.jsonl");
  write_file(path,
             R"({"participant":"p","hz":50.0,"screen_cm":[10,10],"segments":[]}
{"t":0.0,"acc":[0,0,1],"feature":[0.0],"gaze":null,"motion":null,"base_pred":null}
{"t":-0.5,"acc":[0,0,1],"feature":[0.0],"gaze":null,"motion":null,"base_pred":null}
)");
  try {
    load_session(path, "jsonl");
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("load_session reports schema violations with field names") {
  const auto path = tmp_path("bad_field.jsonl");
  write_file(path,
             R"({"participant":"p","hz":50.0,"screen_cm":[10,10],"segments":[]}
{"t":0.0,"acc":[0,0],"feature":[0.0],"gaze":null,"motion":null,"base_pred":null}
)");
  CHECK_THROWS_AS(load_session(path, "jsonl"), ParseError);
  try {
    load_session(path, "jsonl");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("acc") != std::string::npos);
  }
}

TEST_CASE("feature dimension must stay constant") {
  const auto path = tmp_path("bad_dim.jsonl");
  write_file(path,
             R"({"participant":"p","hz":50.0,"screen_cm":[10,10],"segments":[]}
{"t":0.0,"acc":[0,0,1],"feature":[0.0,1.0],"gaze":null,"motion":null,"base_pred":null}
{"t":0.1,"acc":[0,0,1],"feature":[0.0],"gaze":null,"motion":null,"base_pred":null}
)");
  CHECK_THROWS_AS(load_session(path, "jsonl"), ParseError);
}

TEST_CASE("save/load round trip is bit-identical for generated sessions") {
  for (std::uint64_t seed : {1ull, 7ull, 42ull}) {
    auto cfg = make_default_config(3, 16, 4.0, seed);
    const auto s = generate_session(cfg);
    const auto p1 = tmp_path("rt1.jsonl");
    const auto p2 = tmp_path("rt2.jsonl");
    save_session(s, p1, "jsonl");
    const auto loaded = load_session(p1, "jsonl");
    save_session(loaded, p2, "jsonl");
    CHECK(slurp(p1) == slurp(p2));
    CHECK(frames_equal(s, loaded));
  }
}

TEST_CASE("CSV round trip preserves frames exactly") {
  auto cfg = make_default_config(2, 8, 3.0, 5);
  const auto s = generate_session(cfg);
  const auto p = tmp_path("rt.csv");
  save_session(s, p, "csv");
  const auto loaded = load_session(p, "csv");
  CHECK(frames_equal(s, loaded));
  CHECK(loaded.meta.hz == s.meta.hz);
  CHECK(loaded.meta.segments.size() == s.meta.segments.size());
}

TEST_CASE("window_stream enumerates strided windows") {
  SessionStream s;
  s.meta.hz = 50.0;
  s.meta.screen_cm = Vec2(10, 10);
  for (int i = 0; i < 400; ++i) {
    Frame f;
    f.t = i / 50.0;
    f.imu.t = f.t;
    f.imu.acc = Vec3(i, 2.0 * i, -i);
    f.feature = VecX::Zero(2);
    s.frames.push_back(f);
  }

  SUBCASE("400 frames, T=200, overlap 0.75 -> stride 50 -> 5 windows") {
    const auto ws = window_stream(s, 200, 0.75);
    REQUIRE(ws.size() == 5);
    // brute-force oracle: starts are exactly {0,50,100,150,200}
    const std::vector<std::size_t> expect = {0, 50, 100, 150, 200};
    for (std::size_t k = 0; k < ws.size(); ++k) {
      CHECK(ws[k].start_index == expect[k]);
      CHECK(ws[k].samples.rows() == 200);
      CHECK(ws[k].samples.cols() == 3);
      CHECK(ws[k].samples(0, 0) == doctest::Approx(static_cast<double>(expect[k])));
    }
  }
  SUBCASE("exactly one full window at zero overlap") {
    SessionStream s2 = s;
    s2.frames.resize(200);
    CHECK(window_stream(s2, 200, 0.0).size() == 1);
  }
  SUBCASE("window longer than the stream is an argument error") {
    SessionStream s2 = s;
    s2.frames.resize(199);
    CHECK_THROWS_AS(window_stream(s2, 200, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(window_stream(s, 0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(window_stream(s, 10, 1.0), std::invalid_argument);
  }
  SUBCASE("window count matches floor((N-T)/stride)+1 across parameters") {
    for (int T : {10, 64, 200}) {
      for (double o : {0.0, 0.25, 0.5, 0.75, 0.9}) {
        const auto stride = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(T * (1.0 - o))));
        const auto ws = window_stream(s, T, o);
        CHECK(ws.size() == (400 - static_cast<std::size_t>(T)) / stride + 1);
        for (std::size_t k = 0; k < ws.size(); ++k) CHECK(ws[k].start_index == k * stride);
      }
    }
  }
}

TEST_CASE("z_normalize") {
  ImuWindow w;
  w.samples.resize(4, 3);
  w.samples << 1, 2, 3, 1, 4, 3, 1, 6, 3, 1, 8, 3;

  SUBCASE("identity stats leave the window unchanged") {
    ChannelStats st;  // mean 0, std 1
    const auto z = z_normalize(w, st);
    CHECK((z.samples - w.samples).norm() == 0.0);
  }
  SUBCASE("self-stats give zero mean and unit std per channel") {
    ImuWindow v;
    v.samples.resize(5, 3);
    v.samples << 0.1, 2, -3, 0.4, 4, -1, 0.9, 6, 0, 1.6, 8, 2, 2.5, 10, 7;
    std::vector<ImuWindow> pool = {v};
    const auto st = compute_channel_stats(pool);
    const auto z = z_normalize(v, st);
    // independent recomputation of the population moments per channel
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int i = 0; i < 5; ++i) mean += z.samples(i, c);
      mean /= 5.0;
      double var = 0.0;
      for (int i = 0; i < 5; ++i) var += (z.samples(i, c) - mean) * (z.samples(i, c) - mean);
      var /= 5.0;
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
  }
  SUBCASE("constant channel with pooled stats maps to a constant") {
    ChannelStats st;
    st.mean = Vec3(0.5, 0.0, 1.0);
    st.std = Vec3(2.0, 1.0, 4.0);
    const auto z = z_normalize(w, st);
    for (int i = 0; i < 4; ++i) {
      CHECK(z.samples(i, 0) == doctest::Approx(0.25));
      CHECK(z.samples(i, 2) == doctest::Approx(0.5));
    }
  }
  SUBCASE("zero std is an argument error") {
    ChannelStats st;
    st.std = Vec3(1.0, 0.0, 1.0);
    CHECK_THROWS_AS(z_normalize(w, st), std::invalid_argument);
  }
  SUBCASE("normalize then denormalize is the identity") {
    ChannelStats st;
    st.mean = Vec3(0.3, -0.2, 1.1);
    st.std = Vec3(0.7, 2.0, 0.05);
    const auto back = z_denormalize(z_normalize(w, st), st);
    CHECK((back.samples - w.samples).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("z-normalization is affine-compatible") {
    // z(a*x+b) with stats (a*mu+b, a*sigma) equals z(x) with stats (mu, sigma)
    ChannelStats st;
    st.mean = Vec3(1.0, 5.0, 3.0);
    st.std = Vec3(0.5, 2.0, 1.5);
    const double a = 3.0, b = -2.0;
    ImuWindow w2;
    w2.samples = (a * w.samples.array() + b).matrix();
    ChannelStats st2;
    st2.mean = (a * st.mean.array() + b).matrix();
    st2.std = (a * st.std.array()).matrix();
    CHECK((z_normalize(w2, st2).samples - z_normalize(w, st).samples).cwiseAbs().maxCoeff() <
          1e-9);
  }
}

TEST_CASE("resample_linear interpolates and clamps") {
  const std::vector<double> times = {0.0, 1.0, 2.0};
  const std::vector<Vec3> values = {Vec3(0, 0, 0), Vec3(2, 4, 6), Vec3(4, 8, 12)};
  const auto out = resample_linear(times, values, {-1.0, 0.5, 1.75, 5.0});
  CHECK(out[0] == Vec3(0, 0, 0));
  CHECK((out[1] - Vec3(1, 2, 3)).norm() < 1e-12);
  CHECK((out[2] - Vec3(3.5, 7, 10.5)).norm() < 1e-12);
  CHECK(out[3] == Vec3(4, 8, 12));
}

TEST_CASE("segment lookup respects boundaries") {
  SessionStream s;
  s.meta.segments = {{"a", 0.0, 1.0}, {"b", 1.0, 2.0}};
  CHECK(*s.segment_label_at(0.0) == "a");
  CHECK(*s.segment_label_at(0.999) == "a");
  CHECK(*s.segment_label_at(1.0) == "b");
  CHECK(*s.segment_label_at(2.0) == "b");  // last segment closes its end
  CHECK_FALSE(s.segment_label_at(2.5).has_value());
}
