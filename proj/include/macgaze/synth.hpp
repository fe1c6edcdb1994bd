#pragma once

#include <map>
#include <string>
#include <vector>

#include "macgaze/session.hpp"

namespace macgaze {

struct Oscillation {
  Vec3 amplitude = Vec3::Zero();  // g
  double freq_hz = 0.0;           // 0 for static postures
  double phase = 0.0;
};

/// Generative description of one motion state: IMU distribution plus the
/// per-motion affine distortion of the feature manifold and the backbone
/// prediction bias it induces.
struct MotionProfile {
  std::string label;
  Vec3 imu_mean = Vec3::Zero();
  Mat3 imu_cov = Mat3::Identity() * 1e-4;
  Oscillation oscillation;
  MatX distortion_a;  // d x d, near identity
  VecX distortion_b;  // d
  Vec2 base_bias = Vec2::Zero();  // cm
  double base_noise_std = 0.0;    // cm
};

struct SegmentSpec {
  std::string label;
  double duration_s = 40.0;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::uint64_t family_seed = 7;  // fixes the feature geometry across sessions
  int d = 256;
  double hz = 50.0;
  Vec2 screen_cm{7.0, 14.0};
  std::vector<MotionProfile> profiles;
  std::vector<SegmentSpec> segments;
  MatX embed;       // d x 2
  VecX embed_bias;  // d, orthogonal to col(embed)
  double feature_noise_std = 0.05;
  std::string participant = "synth";

  const MotionProfile& profile_for(const std::string& label) const;
  void validate() const;
};

/// The five stock motion profiles (lying/sitting/standing/walking/
/// walking_maze) with distinct IMU means, oscillations on the walking
/// states, and per-motion feature distortions.
std::vector<MotionProfile> default_profiles(int d, std::uint64_t family_seed,
                                            const MatX& embed, const VecX& embed_bias);

/// Config with the first num_motions stock profiles as segments.
SynthConfig make_default_config(int num_motions = 4, int d = 256, double segment_s = 40.0,
                                std::uint64_t seed = 1);

SessionStream generate_session(const SynthConfig& cfg);

/// Exact feature->gaze inverse per motion. With feature_noise_std = 0 the
/// recovered gaze matches the generated ground truth to rounding error.
class GazeOracle {
 public:
  explicit GazeOracle(const SynthConfig& cfg);
  Vec2 invert(const std::string& motion_label, const VecX& feature) const;

 private:
  struct PerMotion {
    Eigen::ColPivHouseholderQR<MatX> qr;  // of distortion_a * embed
    VecX offset;                          // distortion_b + distortion_a * embed_bias
  };
  std::map<std::string, PerMotion> motions_;
};

/// Sample labeled raw IMU windows directly from motion profiles
/// (balanced per class) for detector training.
struct HarWindowSet {
  std::vector<ImuWindow> windows;  // raw, unnormalized
  std::vector<int> labels;
  std::vector<std::string> class_names;
};
HarWindowSet sample_har_windows(const std::vector<MotionProfile>& profiles, int per_class,
                                int window_len, double hz, std::uint64_t seed);

/// Column-name mapping for external per-participant CSV exports.
struct RgbdColumnMap {
  std::string t = "t";
  std::string gaze_x = "gx";
  std::string gaze_y = "gy";
  std::string acc_x = "ax";
  std::string acc_y = "ay";
  std::string acc_z = "az";
  std::string motion = "posture";
  std::string feature_prefix = "f";
};

/// Ingest user-prepared feature/gaze/IMU CSVs, one participant per
/// "<pid>_frames.csv" file in dir. If "<pid>_imu.csv" (t,ax,ay,az at its
/// own rate) is present its accelerometer stream is linearly resampled to
/// frame timestamps; otherwise the frame CSV must carry acc columns.
std::vector<SessionStream> ingest_rgbdgaze_csv(const std::string& dir,
                                               const RgbdColumnMap& mapping = {});

}  // namespace macgaze
