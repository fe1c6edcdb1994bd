#include "macgaze/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace macgaze {

using nlohmann::json;

namespace {

constexpr double kGazeBoundTol = 1e-9;

std::string meta_sidecar_path(const std::string& csv_path) {
  auto dot = csv_path.rfind('.');
  const std::string stem = (dot == std::string::npos) ? csv_path : csv_path.substr(0, dot);
  return stem + ".meta.json";
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& msg) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + msg);
}

Vec2 json_vec2(const json& j, const std::string& path, std::size_t line, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    parse_fail(path, line, std::string(field) + " must be a 2-element number array");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

Vec3 json_vec3(const json& j, const std::string& path, std::size_t line, const char* field) {
  if (!j.is_array() || j.size() != 3)
    parse_fail(path, line, std::string(field) + " must be a 3-element number array");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) parse_fail(path, line, std::string(field) + " must hold numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

SessionMeta meta_from_json(const json& j, const std::string& path, std::size_t line) {
  if (!j.is_object()) parse_fail(path, line, "header must be a JSON object");
  SessionMeta meta;
  meta.participant = j.value("participant", std::string{});
  meta.hz = j.value("hz", 50.0);
  if (!(meta.hz > 0.0)) throw IntegrityError(path + ": sampling rate must be > 0");
  if (j.contains("screen_cm")) meta.screen_cm = json_vec2(j["screen_cm"], path, line, "screen_cm");
  if (j.contains("segments")) {
    if (!j["segments"].is_array()) parse_fail(path, line, "segments must be an array");
    for (const auto& js : j["segments"]) {
      MotionSegment seg;
      if (!js.contains("label") || !js.contains("start") || !js.contains("end"))
        parse_fail(path, line, "segment needs label/start/end");
      seg.label = js["label"].get<std::string>();
      seg.start = js["start"].get<double>();
      seg.end = js["end"].get<double>();
      meta.segments.push_back(seg);
    }
  }
  double prev_end = -std::numeric_limits<double>::infinity();
  for (const auto& seg : meta.segments) {
    if (seg.end <= seg.start || seg.start < prev_end)
      throw IntegrityError(path + ": segments must be ordered and non-overlapping");
    prev_end = seg.end;
  }
  return meta;
}

json meta_to_json(const SessionMeta& meta) {
  json segs = json::array();
  for (const auto& seg : meta.segments)
    segs.push_back({{"label", seg.label}, {"start", seg.start}, {"end", seg.end}});
  return json{{"participant", meta.participant},
              {"hz", meta.hz},
              {"screen_cm", {meta.screen_cm.x(), meta.screen_cm.y()}},
              {"segments", segs}};
}

void check_frame_invariants(const Frame& f, const SessionMeta& meta, const std::string& path,
                            std::size_t line) {
  if (!std::isfinite(f.t) || !f.imu.acc.allFinite())
    throw IntegrityError(path + ":" + std::to_string(line) + ": non-finite t or acc");
  if (!f.feature.allFinite())
    throw IntegrityError(path + ":" + std::to_string(line) + ": non-finite feature");
  if (f.gaze) {
    const Vec2 half = meta.screen_cm / 2.0;
    if (!f.gaze->allFinite() || std::abs(f.gaze->x()) > half.x() + kGazeBoundTol ||
        std::abs(f.gaze->y()) > half.y() + kGazeBoundTol)
      throw IntegrityError(path + ":" + std::to_string(line) + ": gaze outside screen bounds");
  }
}

SessionStream load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file, expected header line");
  ++lineno;
  json jheader;
  try {
    jheader = json::parse(line);
  } catch (const json::exception& e) {
    parse_fail(path, lineno, std::string("invalid JSON header: ") + e.what());
  }
  SessionStream s;
  s.meta = meta_from_json(jheader, path, lineno);

  Eigen::Index d = -1;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      parse_fail(path, lineno, std::string("invalid JSON: ") + e.what());
    }
    Frame f;
    if (!j.contains("t") || !j["t"].is_number()) parse_fail(path, lineno, "missing field t");
    f.t = j["t"].get<double>();
    if (!j.contains("acc")) parse_fail(path, lineno, "missing field acc");
    f.imu.acc = json_vec3(j["acc"], path, lineno, "acc");
    f.imu.t = f.t;
    if (!j.contains("feature") || !j["feature"].is_array())
      parse_fail(path, lineno, "missing field feature");
    const auto& jf = j["feature"];
    if (d < 0) d = static_cast<Eigen::Index>(jf.size());
    if (static_cast<Eigen::Index>(jf.size()) != d)
      parse_fail(path, lineno,
                 "feature dimension " + std::to_string(jf.size()) + ", expected " +
                     std::to_string(d));
    f.feature.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!jf[static_cast<std::size_t>(i)].is_number())
        parse_fail(path, lineno, "feature must hold numbers");
      f.feature[i] = jf[static_cast<std::size_t>(i)].get<double>();
    }
    if (j.contains("gaze") && !j["gaze"].is_null())
      f.gaze = json_vec2(j["gaze"], path, lineno, "gaze");
    if (j.contains("motion") && !j["motion"].is_null())
      f.motion_label = j["motion"].get<std::string>();
    if (j.contains("base_pred") && !j["base_pred"].is_null())
      f.base_prediction = json_vec2(j["base_pred"], path, lineno, "base_pred");

    if (!(f.t > prev_t))
      throw IntegrityError(path + ":" + std::to_string(lineno) +
                           ": timestamp not strictly increasing");
    prev_t = f.t;
    check_frame_invariants(f, s.meta, path, lineno);
    s.frames.push_back(std::move(f));
  }
  return s;
}

void save_jsonl(const SessionStream& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << meta_to_json(s.meta).dump() << "\n";
  for (const auto& f : s.frames) {
    json j;
    j["t"] = f.t;
    j["acc"] = {f.imu.acc.x(), f.imu.acc.y(), f.imu.acc.z()};
    json jf = json::array();
    for (Eigen::Index i = 0; i < f.feature.size(); ++i) jf.push_back(f.feature[i]);
    j["feature"] = std::move(jf);
    j["gaze"] = f.gaze ? json{f.gaze->x(), f.gaze->y()} : json(nullptr);
    j["motion"] = f.motion_label ? json(*f.motion_label) : json(nullptr);
    j["base_pred"] =
        f.base_prediction ? json{f.base_prediction->x(), f.base_prediction->y()} : json(nullptr);
    out << j.dump() << "\n";
  }
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

SessionStream load_csv(const std::string& path) {
  std::ifstream meta_in(meta_sidecar_path(path));
  if (!meta_in) throw ParseError("missing sidecar meta file " + meta_sidecar_path(path));
  json jmeta;
  try {
    meta_in >> jmeta;
  } catch (const json::exception& e) {
    throw ParseError(meta_sidecar_path(path) + ": invalid JSON: " + e.what());
  }
  SessionStream s;
  s.meta = meta_from_json(jmeta, meta_sidecar_path(path), 1);

  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file, expected header row");
  ++lineno;
  const auto header = split_csv_line(line);
  // t,ax,ay,az,f0..f{d-1},gx,gy,motion,bx,by
  if (header.size() < 10 || header[0] != "t")
    parse_fail(path, lineno, "unexpected CSV header");
  const std::size_t d = header.size() - 9;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[4 + i] != "f" + std::to_string(i))
      parse_fail(path, lineno, "expected feature column f" + std::to_string(i));
  }

  double prev_t = -std::numeric_limits<double>::infinity();
  auto num = [&](const std::string& cell, const char* field) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(cell, &pos);
      if (pos != cell.size()) throw std::invalid_argument("trailing chars");
      return v;
    } catch (const std::exception&) {
      parse_fail(path, lineno, std::string("bad number in column ") + field);
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      parse_fail(path, lineno, "expected " + std::to_string(header.size()) + " columns, got " +
                                   std::to_string(cells.size()));
    Frame f;
    f.t = num(cells[0], "t");
    f.imu.t = f.t;
    f.imu.acc = Vec3(num(cells[1], "ax"), num(cells[2], "ay"), num(cells[3], "az"));
    f.feature.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i)
      f.feature[static_cast<Eigen::Index>(i)] = num(cells[4 + i], header[4 + i].c_str());
    const std::string& gx = cells[4 + d];
    const std::string& gy = cells[5 + d];
    if (!gx.empty() != !gy.empty()) parse_fail(path, lineno, "gx/gy must both be present or empty");
    if (!gx.empty()) f.gaze = Vec2(num(gx, "gx"), num(gy, "gy"));
    if (!cells[6 + d].empty()) f.motion_label = cells[6 + d];
    const std::string& bx = cells[7 + d];
    const std::string& by = cells[8 + d];
    if (!bx.empty() != !by.empty()) parse_fail(path, lineno, "bx/by must both be present or empty");
    if (!bx.empty()) f.base_prediction = Vec2(num(bx, "bx"), num(by, "by"));

    if (!(f.t > prev_t))
      throw IntegrityError(path + ":" + std::to_string(lineno) +
                           ": timestamp not strictly increasing");
    prev_t = f.t;
    check_frame_invariants(f, s.meta, path, lineno);
    s.frames.push_back(std::move(f));
  }
  return s;
}

void save_csv(const SessionStream& s, const std::string& path) {
  {
    std::ofstream meta_out(meta_sidecar_path(path));
    if (!meta_out) throw ParseError("cannot open " + meta_sidecar_path(path) + " for writing");
    meta_out << meta_to_json(s.meta).dump(2) << "\n";
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  const std::size_t d = s.feature_dim();
  out << "t,ax,ay,az";
  for (std::size_t i = 0; i < d; ++i) out << ",f" << i;
  out << ",gx,gy,motion,bx,by\n";
  for (const auto& f : s.frames) {
    if (f.motion_label && f.motion_label->find(',') != std::string::npos)
      throw ParseError("motion label with comma cannot be stored as CSV: " + *f.motion_label);
    out << fmt_double(f.t) << ',' << fmt_double(f.imu.acc.x()) << ',' << fmt_double(f.imu.acc.y())
        << ',' << fmt_double(f.imu.acc.z());
    for (Eigen::Index i = 0; i < f.feature.size(); ++i) out << ',' << fmt_double(f.feature[i]);
    if (f.gaze)
      out << ',' << fmt_double(f.gaze->x()) << ',' << fmt_double(f.gaze->y());
    else
      out << ",,";
    out << ',' << (f.motion_label ? *f.motion_label : "");
    if (f.base_prediction)
      out << ',' << fmt_double(f.base_prediction->x()) << ',' << fmt_double(f.base_prediction->y());
    else
      out << ",,";
    out << "\n";
  }
}

}  // namespace

std::optional<std::string> SessionStream::segment_label_at(double t) const {
  if (auto idx = segment_index_at(t)) return meta.segments[*idx].label;
  return std::nullopt;
}

std::optional<std::size_t> SessionStream::segment_index_at(double t) const {
  for (std::size_t i = 0; i < meta.segments.size(); ++i) {
    const auto& seg = meta.segments[i];
    const bool last = (i + 1 == meta.segments.size());
    if (t >= seg.start && (t < seg.end || (last && t <= seg.end))) return i;
  }
  return std::nullopt;
}

SessionStream load_session(const std::string& path, const std::string& format) {
  if (format == "jsonl") return load_jsonl(path);
  if (format == "csv") return load_csv(path);
  throw std::invalid_argument("unknown session format: " + format);
}

void save_session(const SessionStream& s, const std::string& path, const std::string& format) {
  if (format == "jsonl") return save_jsonl(s, path);
  if (format == "csv") return save_csv(s, path);
  throw std::invalid_argument("unknown session format: " + format);
}

namespace {

template <typename AccAt>
std::vector<ImuWindow> window_impl(std::size_t n, int window_len, double overlap, AccAt acc_at) {
  if (window_len <= 0) throw std::invalid_argument("window length must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("overlap must be in [0,1)");
  const auto t = static_cast<std::size_t>(window_len);
  if (t > n)
    throw std::invalid_argument("window length " + std::to_string(window_len) +
                                " exceeds stream length " + std::to_string(n));
  const auto stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window_len * (1.0 - overlap))));
  std::vector<ImuWindow> out;
  out.reserve((n - t) / stride + 1);
  for (std::size_t start = 0; start + t <= n; start += stride) {
    ImuWindow w;
    w.start_index = start;
    w.samples.resize(window_len, 3);
    for (int i = 0; i < window_len; ++i) w.samples.row(i) = acc_at(start + i).transpose();
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

std::vector<ImuWindow> window_stream(const SessionStream& s, int window_len, double overlap) {
  return window_impl(s.frames.size(), window_len, overlap,
                     [&](std::size_t i) -> const Vec3& { return s.frames[i].imu.acc; });
}

std::vector<ImuWindow> window_samples(const std::vector<ImuSample>& samples, int window_len,
                                      double overlap) {
  return window_impl(samples.size(), window_len, overlap,
                     [&](std::size_t i) -> const Vec3& { return samples[i].acc; });
}

ImuWindow z_normalize(const ImuWindow& w, const ChannelStats& stats) {
  for (int c = 0; c < 3; ++c)
    if (!(stats.std[c] > 0.0))
      throw std::invalid_argument("zero std in channel " + std::to_string(c) +
                                  "; use pooled stats or add an epsilon");
  ImuWindow out;
  out.start_index = w.start_index;
  out.samples = w.samples;
  for (int c = 0; c < 3; ++c)
    out.samples.col(c) = (out.samples.col(c).array() - stats.mean[c]) / stats.std[c];
  return out;
}

ImuWindow z_denormalize(const ImuWindow& w, const ChannelStats& stats) {
  ImuWindow out;
  out.start_index = w.start_index;
  out.samples = w.samples;
  for (int c = 0; c < 3; ++c)
    out.samples.col(c) = out.samples.col(c).array() * stats.std[c] + stats.mean[c];
  return out;
}

ChannelStats compute_channel_stats(const std::vector<ImuWindow>& windows) {
  std::size_t n = 0;
  Vec3 sum = Vec3::Zero(), sumsq = Vec3::Zero();
  for (const auto& w : windows) {
    n += static_cast<std::size_t>(w.samples.rows());
    for (int c = 0; c < 3; ++c) {
      sum[c] += w.samples.col(c).sum();
      sumsq[c] += w.samples.col(c).squaredNorm();
    }
  }
  if (n == 0) throw std::invalid_argument("cannot compute channel stats over zero samples");
  ChannelStats stats;
  stats.mean = sum / static_cast<double>(n);
  for (int c = 0; c < 3; ++c) {
    const double var = sumsq[c] / static_cast<double>(n) - stats.mean[c] * stats.mean[c];
    stats.std[c] = std::sqrt(std::max(0.0, var));
  }
  return stats;
}

std::vector<Vec3> resample_linear(const std::vector<double>& times, const std::vector<Vec3>& values,
                                  const std::vector<double>& query_times) {
  if (times.size() != values.size() || times.empty())
    throw std::invalid_argument("resample_linear needs equal-length non-empty times/values");
  std::vector<Vec3> out;
  out.reserve(query_times.size());
  for (double q : query_times) {
    if (q <= times.front()) {
      out.push_back(values.front());
      continue;
    }
    if (q >= times.back()) {
      out.push_back(values.back());
      continue;
    }
    const auto it = std::upper_bound(times.begin(), times.end(), q);
    const auto hi = static_cast<std::size_t>(it - times.begin());
    const auto lo = hi - 1;
    const double span = times[hi] - times[lo];
    const double w = span > 0.0 ? (q - times[lo]) / span : 0.0;
    out.push_back((1.0 - w) * values[lo] + w * values[hi]);
  }
  return out;
}

}  // namespace macgaze
