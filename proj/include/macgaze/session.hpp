#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "macgaze/common.hpp"

namespace macgaze {

/// One raw tri-axial accelerometer reading in g units.
struct ImuSample {
  double t = 0.0;
  Vec3 acc = Vec3::Zero();
};

/// T consecutive accelerometer samples from one stream, rows contiguous
/// in the source. samples is T x 3.
struct ImuWindow {
  MatX samples;
  std::size_t start_index = 0;

  Eigen::Index length() const { return samples.rows(); }
};

/// One time-aligned observation: IMU reading, visual feature vector and,
/// when available, gaze ground truth / activity label / uncalibrated
/// backbone prediction.
struct Frame {
  double t = 0.0;
  ImuSample imu;
  VecX feature;
  std::optional<Vec2> gaze;
  std::optional<std::string> motion_label;
  std::optional<Vec2> base_prediction;
};

struct MotionSegment {
  std::string label;
  double start = 0.0;  // seconds, inclusive
  double end = 0.0;    // seconds, exclusive
};

struct SessionMeta {
  std::string participant;
  double hz = 50.0;
  Vec2 screen_cm{7.0, 14.0};  // width, height; gaze is centered, so
                              // valid gaze lies in [-w/2,w/2] x [-h/2,h/2]
  std::vector<MotionSegment> segments;
};

struct SessionStream {
  SessionMeta meta;
  std::vector<Frame> frames;

  std::size_t feature_dim() const {
    return frames.empty() ? 0 : static_cast<std::size_t>(frames.front().feature.size());
  }
  /// Label of the annotated segment containing time t, if any.
  std::optional<std::string> segment_label_at(double t) const;
  /// Index into meta.segments of the segment containing time t.
  std::optional<std::size_t> segment_index_at(double t) const;
};

/// Per-channel normalization statistics (population moments).
struct ChannelStats {
  Vec3 mean = Vec3::Zero();
  Vec3 std = Vec3::Ones();
};

SessionStream load_session(const std::string& path, const std::string& format);
void save_session(const SessionStream& s, const std::string& path, const std::string& format);

/// Slice s into fixed-length IMU windows.
/// stride = round(T * (1 - overlap)), clamped to >= 1; the trailing
/// partial window is dropped.
std::vector<ImuWindow> window_stream(const SessionStream& s, int window_len, double overlap);

/// Same slicing over a bare sample sequence (used outside full sessions).
std::vector<ImuWindow> window_samples(const std::vector<ImuSample>& samples, int window_len,
                                      double overlap);

ImuWindow z_normalize(const ImuWindow& w, const ChannelStats& stats);
ImuWindow z_denormalize(const ImuWindow& w, const ChannelStats& stats);

/// Population mean/std per channel pooled over all windows.
ChannelStats compute_channel_stats(const std::vector<ImuWindow>& windows);

/// Linear interpolation of a sampled 3-channel signal at query times.
/// Query times outside [times.front(), times.back()] clamp to the ends.
std::vector<Vec3> resample_linear(const std::vector<double>& times,
                                  const std::vector<Vec3>& values,
                                  const std::vector<double>& query_times);

}  // namespace macgaze
