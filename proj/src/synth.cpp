#include "macgaze/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace macgaze {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

MatX orthonormal_embed(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatX raw(d, 2);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < 2; ++j) raw(i, j) = gauss(rng);
  Eigen::HouseholderQR<MatX> qr(raw);
  MatX q = qr.householderQ() * MatX::Identity(d, 2);
  return q;
}

VecX random_unit_orthogonal(const std::vector<VecX>& basis, std::size_t hard_prefix, int d,
                            std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0; attempt < 4; ++attempt) {
    VecX v(d);
    for (int i = 0; i < d; ++i) v[i] = gauss(rng);
    // always project out the hard prefix (the gaze plane); stay orthogonal
    // to the other directions only while dimensions remain
    for (std::size_t i = 0; i < basis.size(); ++i) {
      VecX v2 = v - basis[i].dot(v) / basis[i].squaredNorm() * basis[i];
      if (i >= hard_prefix && v2.norm() < 1e-9) break;
      v = v2;
    }
    if (v.norm() > 1e-9) return v / v.norm();
  }
  throw ConfigError("failed to draw an offset direction outside the gaze plane");
}

Mat2 gaze_map(double rot_deg, double scale) {
  const double th = rot_deg * std::numbers::pi / 180.0;
  Mat2 r;
  r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  return scale * r;
}

struct ProfileSeed {
  const char* label;
  Vec3 imu_mean;
  Vec3 imu_std;
  Vec3 osc_amp;
  double osc_hz;
  double rot_deg;
  double scale;
  Vec2 shift_cm;
  Vec2 base_bias;
  double base_noise_std;
};

const ProfileSeed kStockProfiles[] = {
    {"lying", {0.02, 0.12, 0.98}, {0.02, 0.02, 0.02}, {0, 0, 0}, 0.0,
     4.0, 1.06, {0.5, -0.3}, {1.3, 0.9}, 0.6},
    {"sitting", {0.03, 0.62, 0.76}, {0.03, 0.03, 0.03}, {0, 0, 0}, 0.0,
     -3.0, 0.95, {-0.4, 0.5}, {-1.5, 1.0}, 0.7},
    {"standing", {-0.02, 0.92, 0.36}, {0.04, 0.04, 0.04}, {0, 0, 0}, 0.0,
     2.0, 1.09, {0.3, 0.6}, {1.2, -1.5}, 0.7},
    {"walking", {0.00, 0.95, 0.22}, {0.10, 0.12, 0.10}, {0.22, 0.38, 0.30}, 2.0,
     -5.0, 1.12, {-0.6, -0.4}, {-1.7, -1.4}, 0.9},
    {"walking_maze", {0.05, 0.90, 0.28}, {0.14, 0.16, 0.14}, {0.30, 0.46, 0.40}, 2.4,
     7.0, 0.90, {0.7, -0.6}, {1.9, 1.5}, 1.0},
};

}  // namespace

std::vector<MotionProfile> default_profiles(int d, std::uint64_t family_seed, const MatX& embed,
                                            const VecX& embed_bias) {
  auto rng = substream(family_seed, "profile-offsets");
  std::vector<VecX> used_dirs;
  used_dirs.push_back(embed.col(0));
  used_dirs.push_back(embed.col(1));
  if (embed_bias.norm() > 0) used_dirs.push_back(embed_bias);
  const std::size_t hard_prefix = used_dirs.size();

  const double offset_scale = 1.2;
  std::vector<MotionProfile> out;
  for (const auto& ps : kStockProfiles) {
    MotionProfile p;
    p.label = ps.label;
    p.imu_mean = ps.imu_mean;
    p.imu_cov = ps.imu_std.array().square().matrix().asDiagonal();
    p.oscillation.amplitude = ps.osc_amp;
    p.oscillation.freq_hz = ps.osc_hz;
    p.oscillation.phase = 0.0;
    const Mat2 dm = gaze_map(ps.rot_deg, ps.scale);
    // A = I + E (D - I) E^T acts as D inside the gaze plane and as the
    // identity on its complement; b carries the in-plane shift plus a
    // per-motion offset orthogonal to the plane, so feature clouds of
    // different motions are separated sheets over the same gaze range.
    p.distortion_a = MatX::Identity(d, d) + embed * (dm - Mat2::Identity()) * embed.transpose();
    const VecX dir = random_unit_orthogonal(used_dirs, hard_prefix, d, rng);
    used_dirs.push_back(dir);
    p.distortion_b = embed * ps.shift_cm + offset_scale * dir;
    p.base_bias = ps.base_bias;
    p.base_noise_std = ps.base_noise_std;
    out.push_back(std::move(p));
  }
  return out;
}

SynthConfig make_default_config(int num_motions, int d, double segment_s, std::uint64_t seed) {
  if (num_motions < 1 || num_motions > static_cast<int>(std::size(kStockProfiles)))
    throw ConfigError("num_motions must be in [1," +
                      std::to_string(std::size(kStockProfiles)) + "]");
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.d = d;
  auto rng = substream(cfg.family_seed, "embed");
  cfg.embed = orthonormal_embed(d, rng);
  VecX bias(d);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < d; ++i) bias[i] = gauss(rng);
  bias -= cfg.embed * (cfg.embed.transpose() * bias);
  cfg.embed_bias = bias.normalized() * 0.8;
  cfg.profiles = default_profiles(d, cfg.family_seed, cfg.embed, cfg.embed_bias);
  for (int i = 0; i < num_motions; ++i)
    cfg.segments.push_back({cfg.profiles[static_cast<std::size_t>(i)].label, segment_s});
  return cfg;
}

const MotionProfile& SynthConfig::profile_for(const std::string& label) const {
  for (const auto& p : profiles)
    if (p.label == label) return p;
  throw ConfigError("no profile for motion label " + label);
}

void SynthConfig::validate() const {
  if (d < 2) throw ConfigError("feature dimension must be >= 2");
  if (!(hz > 0)) throw ConfigError("sampling rate must be > 0");
  if (profiles.empty() || segments.empty()) throw ConfigError("profiles and segments required");
  if (embed.rows() != d || embed.cols() != 2) throw ConfigError("embed must be d x 2");
  if (embed_bias.size() != d) throw ConfigError("embed_bias must be length d");
  if (!(screen_cm.x() > 0 && screen_cm.y() > 0)) throw ConfigError("screen must be positive");
  std::set<std::string> labels;
  for (const auto& p : profiles) {
    if (!labels.insert(p.label).second) throw ConfigError("duplicate profile label " + p.label);
    if ((p.imu_cov - p.imu_cov.transpose()).norm() > 1e-12)
      throw ConfigError("imu_cov must be symmetric for " + p.label);
    Eigen::LLT<Mat3> llt(p.imu_cov + 1e-15 * Mat3::Identity());
    if (llt.info() != Eigen::Success) throw ConfigError("imu_cov must be PSD for " + p.label);
    if (p.distortion_a.rows() != d || p.distortion_a.cols() != d || p.distortion_b.size() != d)
      throw ConfigError("distortion shape mismatch for " + p.label);
  }
  for (std::size_t i = 0; i < profiles.size(); ++i)
    for (std::size_t j = i + 1; j < profiles.size(); ++j) {
      const auto& a = profiles[i];
      const auto& b = profiles[j];
      const bool mean_distinct = (a.imu_mean - b.imu_mean).norm() > 1e-9;
      const bool osc_distinct =
          (a.oscillation.amplitude - b.oscillation.amplitude).norm() > 1e-9 ||
          std::abs(a.oscillation.freq_hz - b.oscillation.freq_hz) > 1e-9;
      if (!mean_distinct && !osc_distinct)
        throw ConfigError("profiles " + a.label + " and " + b.label +
                          " are not separable (same imu_mean and oscillation)");
    }
  for (const auto& s : segments) {
    if (!(s.duration_s > 0)) throw ConfigError("segment durations must be > 0");
    profile_for(s.label);  // throws if unknown
  }
}

SessionStream generate_session(const SynthConfig& cfg) {
  cfg.validate();
  SessionStream s;
  s.meta.participant = cfg.participant;
  s.meta.hz = cfg.hz;
  s.meta.screen_cm = cfg.screen_cm;

  double t0 = 0.0;
  for (const auto& seg : cfg.segments) {
    s.meta.segments.push_back({seg.label, t0, t0 + seg.duration_s});
    t0 += seg.duration_s;
  }
  const double total = t0;
  const auto n_frames = static_cast<std::size_t>(std::llround(total * cfg.hz));

  auto feat_rng = substream(cfg.seed, "feature");
  auto imu_rng = substream(cfg.seed, "imu");
  auto base_rng = substream(cfg.seed, "base");
  std::normal_distribution<double> gauss(0.0, 1.0);

  struct SegCtx {
    const MotionProfile* profile;
    Eigen::LLT<Mat3> chol;
    double phase1, phase2;  // pursuit path phases
  };
  std::vector<SegCtx> ctx;
  for (std::size_t k = 0; k < cfg.segments.size(); ++k) {
    SegCtx c;
    c.profile = &cfg.profile_for(cfg.segments[k].label);
    c.chol = Eigen::LLT<Mat3>(c.profile->imu_cov + 1e-15 * Mat3::Identity());
    auto path_rng = substream(cfg.seed, "path", k);
    std::uniform_real_distribution<double> uni(0.0, kTwoPi);
    c.phase1 = uni(path_rng);
    c.phase2 = uni(path_rng);
    ctx.push_back(std::move(c));
  }

  const Vec2 amp = 0.85 * cfg.screen_cm / 2.0;
  const double f1 = 0.11, f2 = 0.073;  // slow smooth pursuit

  s.frames.reserve(n_frames);
  std::size_t seg_idx = 0;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double t = static_cast<double>(i) / cfg.hz;
    while (seg_idx + 1 < s.meta.segments.size() && t >= s.meta.segments[seg_idx].end) ++seg_idx;
    const auto& c = ctx[seg_idx];
    const auto& p = *c.profile;

    Frame f;
    f.t = t;
    const Vec2 y(amp.x() * std::sin(kTwoPi * f1 * t + c.phase1),
                 amp.y() * std::sin(kTwoPi * f2 * t + c.phase2));
    f.gaze = y;
    f.motion_label = p.label;

    VecX noise(cfg.d);
    for (int j = 0; j < cfg.d; ++j) noise[j] = gauss(feat_rng);
    f.feature = p.distortion_a * (cfg.embed * y + cfg.embed_bias) + p.distortion_b +
                cfg.feature_noise_std * noise;

    Vec3 z3(gauss(imu_rng), gauss(imu_rng), gauss(imu_rng));
    Vec3 osc = Vec3::Zero();
    if (p.oscillation.freq_hz > 0)
      osc = p.oscillation.amplitude *
            std::sin(kTwoPi * p.oscillation.freq_hz * t + p.oscillation.phase);
    f.imu.t = t;
    f.imu.acc = p.imu_mean + osc + c.chol.matrixL() * z3;

    Vec2 z2(gauss(base_rng), gauss(base_rng));
    f.base_prediction = y + p.base_bias + p.base_noise_std * z2;

    s.frames.push_back(std::move(f));
  }
  return s;
}

GazeOracle::GazeOracle(const SynthConfig& cfg) {
  for (const auto& p : cfg.profiles) {
    PerMotion pm{Eigen::ColPivHouseholderQR<MatX>(p.distortion_a * cfg.embed),
                 p.distortion_b + p.distortion_a * cfg.embed_bias};
    motions_.emplace(p.label, std::move(pm));
  }
}

Vec2 GazeOracle::invert(const std::string& motion_label, const VecX& feature) const {
  const auto it = motions_.find(motion_label);
  if (it == motions_.end()) throw std::invalid_argument("unknown motion label " + motion_label);
  return it->second.qr.solve(feature - it->second.offset);
}

HarWindowSet sample_har_windows(const std::vector<MotionProfile>& profiles, int per_class,
                                int window_len, double hz, std::uint64_t seed) {
  if (per_class <= 0 || window_len <= 0) throw std::invalid_argument("per_class and window_len must be positive");
  HarWindowSet set;
  for (std::size_t c = 0; c < profiles.size(); ++c) {
    const auto& p = profiles[c];
    set.class_names.push_back(p.label);
    auto rng = substream(seed, "har-windows", c);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> start(0.0, 120.0);
    Eigen::LLT<Mat3> chol(p.imu_cov + 1e-15 * Mat3::Identity());
    for (int w = 0; w < per_class; ++w) {
      ImuWindow win;
      win.start_index = 0;
      win.samples.resize(window_len, 3);
      const double t0 = start(rng);
      for (int i = 0; i < window_len; ++i) {
        const double t = t0 + i / hz;
        Vec3 osc = Vec3::Zero();
        if (p.oscillation.freq_hz > 0)
          osc = p.oscillation.amplitude *
                std::sin(kTwoPi * p.oscillation.freq_hz * t + p.oscillation.phase);
        Vec3 z(gauss(rng), gauss(rng), gauss(rng));
        win.samples.row(i) = (p.imu_mean + osc + chol.matrixL() * z).transpose();
      }
      set.windows.push_back(std::move(win));
      set.labels.push_back(static_cast<int>(c));
    }
  }
  return set;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty CSV");
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream rs(line);
    while (std::getline(rs, cell, ',')) row.push_back(cell);
    while (row.size() < t.header.size()) row.emplace_back();
    if (row.size() != t.header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": column count mismatch");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

std::vector<SessionStream> ingest_rgbdgaze_csv(const std::string& dir,
                                               const RgbdColumnMap& mapping) {
  namespace fs = std::filesystem;
  std::vector<fs::path> frame_files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 11 && name.ends_with("_frames.csv")) frame_files.push_back(e.path());
  }
  std::sort(frame_files.begin(), frame_files.end());
  if (frame_files.empty()) throw ParseError("no *_frames.csv files found in " + dir);

  std::vector<SessionStream> out;
  for (const auto& path : frame_files) {
    const CsvTable t = read_csv_table(path.string());
    const std::string pid =
        path.filename().string().substr(0, path.filename().string().size() - 11);
    const fs::path imu_path = path.parent_path() / (pid + "_imu.csv");
    const bool has_imu_file = fs::exists(imu_path);

    std::vector<std::string> missing;
    auto require = [&](const std::string& name) {
      const int c = t.col(name);
      if (c < 0) missing.push_back(name);
      return c;
    };
    const int ct = require(mapping.t);
    const int cgx = require(mapping.gaze_x);
    const int cgy = require(mapping.gaze_y);
    const int cm = require(mapping.motion);
    int cax = -1, cay = -1, caz = -1;
    if (!has_imu_file) {
      cax = require(mapping.acc_x);
      cay = require(mapping.acc_y);
      caz = require(mapping.acc_z);
    }
    std::vector<std::pair<int, int>> feature_cols;  // (feature index, column)
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      const auto& h = t.header[i];
      if (h.size() > mapping.feature_prefix.size() && h.starts_with(mapping.feature_prefix)) {
        const std::string idx = h.substr(mapping.feature_prefix.size());
        if (std::all_of(idx.begin(), idx.end(), [](char c) { return std::isdigit(c); }))
          feature_cols.emplace_back(std::stoi(idx), static_cast<int>(i));
      }
    }
    if (feature_cols.empty()) missing.push_back(mapping.feature_prefix + "0..");
    if (!missing.empty()) {
      std::string msg = path.string() + ": missing required columns:";
      for (const auto& m : missing) msg += " " + m;
      throw ParseError(msg);
    }
    std::sort(feature_cols.begin(), feature_cols.end());

    SessionStream s;
    s.meta.participant = pid;
    const int d = static_cast<int>(feature_cols.size());
    double max_gx = 0.0, max_gy = 0.0;
    for (const auto& row : t.rows) {
      Frame f;
      f.t = std::stod(row[static_cast<std::size_t>(ct)]);
      f.imu.t = f.t;
      if (!has_imu_file)
        f.imu.acc = Vec3(std::stod(row[static_cast<std::size_t>(cax)]),
                         std::stod(row[static_cast<std::size_t>(cay)]),
                         std::stod(row[static_cast<std::size_t>(caz)]));
      f.feature.resize(d);
      for (int i = 0; i < d; ++i)
        f.feature[i] = std::stod(row[static_cast<std::size_t>(feature_cols[static_cast<std::size_t>(i)].second)]);
      f.gaze = Vec2(std::stod(row[static_cast<std::size_t>(cgx)]),
                    std::stod(row[static_cast<std::size_t>(cgy)]));
      max_gx = std::max(max_gx, std::abs(f.gaze->x()));
      max_gy = std::max(max_gy, std::abs(f.gaze->y()));
      const std::string& m = row[static_cast<std::size_t>(cm)];
      if (!m.empty()) f.motion_label = m;
      s.frames.push_back(std::move(f));
    }
    if (s.frames.empty()) throw ParseError(path.string() + ": no data rows");
    s.meta.screen_cm = Vec2(2.0 * max_gx + 1.0, 2.0 * max_gy + 1.0);
    if (s.frames.size() > 1) {
      std::vector<double> dts;
      for (std::size_t i = 1; i < s.frames.size(); ++i)
        dts.push_back(s.frames[i].t - s.frames[i - 1].t);
      std::nth_element(dts.begin(), dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2), dts.end());
      const double med = dts[dts.size() / 2];
      if (med > 0) s.meta.hz = 1.0 / med;
    }

    if (has_imu_file) {
      const CsvTable ti = read_csv_table(imu_path.string());
      std::vector<std::string> imissing;
      auto irequire = [&](const std::string& name) {
        const int c = ti.col(name);
        if (c < 0) imissing.push_back(name);
        return c;
      };
      const int it = irequire(mapping.t);
      const int ix = irequire(mapping.acc_x);
      const int iy = irequire(mapping.acc_y);
      const int iz = irequire(mapping.acc_z);
      if (!imissing.empty()) {
        std::string msg = imu_path.string() + ": missing required columns:";
        for (const auto& m : imissing) msg += " " + m;
        throw ParseError(msg);
      }
      std::vector<double> times;
      std::vector<Vec3> accs;
      for (const auto& row : ti.rows) {
        times.push_back(std::stod(row[static_cast<std::size_t>(it)]));
        accs.emplace_back(std::stod(row[static_cast<std::size_t>(ix)]),
                          std::stod(row[static_cast<std::size_t>(iy)]),
                          std::stod(row[static_cast<std::size_t>(iz)]));
      }
      std::vector<double> qs;
      for (const auto& f : s.frames) qs.push_back(f.t);
      const auto resampled = resample_linear(times, accs, qs);
      for (std::size_t i = 0; i < s.frames.size(); ++i) s.frames[i].imu.acc = resampled[i];
    }

    // contiguous posture runs become motion segments
    std::optional<std::string> cur;
    double seg_start = s.frames.front().t;
    const double dt = 1.0 / s.meta.hz;
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      const auto& label = s.frames[i].motion_label;
      if (label != cur) {
        if (cur) s.meta.segments.push_back({*cur, seg_start, s.frames[i].t});
        cur = label;
        seg_start = s.frames[i].t;
      }
    }
    if (cur) s.meta.segments.push_back({*cur, seg_start, s.frames.back().t + dt});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace macgaze
