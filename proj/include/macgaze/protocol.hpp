#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "macgaze/calibrator.hpp"
#include "macgaze/metrics.hpp"
#include "macgaze/synth.hpp"
#include "macgaze/trigger.hpp"

namespace macgaze {

enum class MethodKind {
  no_calibration,
  one_off,
  oracle_motion_aware,
  macgaze_classifier,
  macgaze_hybrid,
  time_based,
};

std::string to_string(MethodKind k);
MethodKind method_from_string(const std::string& s);

struct MethodSpec {
  MethodKind kind = MethodKind::macgaze_hybrid;
  TriggerParams trigger;
  RecalibrateParams calib;

  bool needs_detector() const {
    return kind == MethodKind::macgaze_classifier || kind == MethodKind::macgaze_hybrid;
  }
  bool is_streaming() const {
    return needs_detector() || kind == MethodKind::time_based;
  }
  std::string label() const { return to_string(kind); }
};

struct ProtocolConfig {
  SynthConfig synth;  // base session; segment order rotates per permutation
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  bool permute_start = true;  // every motion serves once as the starting task
  double calib_fraction = 0.10;
  HarConfig har = HarConfig::desk_preset(4);
  HarTrainParams har_train;
  int har_windows_per_class = 120;
  std::size_t replay_capacity = 2000;
  int threads = 1;

  void validate() const;
};

struct FrameRecord {
  double t = 0.0;
  std::string motion;
  double distance = 0.0;  // cm
};

struct TrajectoryPoint {
  int event_index = 0;  // 0 = initial calibration
  double t = 0.0;
  std::string segment;
  double mean_cm = 0.0;
  double mse_cm2 = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  int permutation = 0;
  std::string method;
  std::string start_motion;
  std::vector<FrameRecord> frames;         // final-model evaluation
  std::vector<TriggerDecision> decisions;  // every evaluation tick
  std::vector<double> fire_times;
  std::vector<TrajectoryPoint> trajectory;
  std::size_t calib_frames_used = 0;
  std::size_t eval_calib_overlap = 0;  // disjointness audit; must be 0
};

struct MotionCell {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct TriggerCountStats {
  int min = 0;
  int max = 0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<int> counts;
};

/// Order statistics over per-session fire counts.
TriggerCountStats trigger_stats(const std::vector<int>& counts);

struct Report {
  // cells[method][motion]; motion "average" pools all motions
  std::map<std::string, std::map<std::string, MotionCell>> cells;
  std::map<std::string, TriggerCountStats> triggers;
  std::vector<RunResult> runs;
};

/// Recompute a (method, motion) cell from the per-frame records.
MotionCell recompute_cell(const Report& report, const std::string& method,
                          const std::string& motion);

/// Detector trained on windows sampled from the motion profiles that
/// appear in the configured segments.
HarModel train_protocol_har(const ProtocolConfig& cfg);

/// One method on one session (building block for the drivers).
/// har may be null for methods that skip detection.
RunResult run_method_on_session(const SessionStream& session, const HarModel* har,
                                const MethodSpec& method, const ProtocolConfig& cfg,
                                std::uint64_t run_seed, int permutation);

Report run_protocol(const MethodSpec& method, const ProtocolConfig& cfg);
Report run_protocol_with_har(const MethodSpec& method, const ProtocolConfig& cfg, HarModel& har);

struct OneoffMatrix {
  std::vector<std::string> motions;
  MatX mean;  // test motion (row) x train motion (col)
  MatX std;
  std::vector<double> per_seed_diag_mean;
  std::vector<double> per_seed_offdiag_mean;
};

OneoffMatrix run_oneoff_matrix(const ProtocolConfig& cfg);

struct AblationReport {
  Report full;             // macgaze_hybrid
  Report without_hybrid;   // macgaze_classifier
  Report without_replay;   // hybrid, replay_ratio = 0
  Report time_based;       // fire count matched to full, evenly spaced
};

AblationReport run_ablations(const ProtocolConfig& cfg);

struct ReplaySweep {
  std::vector<double> ratios;
  std::vector<std::string> start_motions;
  MatX mean;  // ratio (row) x start motion (col), overall mean error
  MatX std;
  // per ratio, per seed: first-task error after the final calibration
  std::map<double, std::vector<double>> retention;
};

ReplaySweep sweep_replay(const ProtocolConfig& cfg,
                         const std::vector<double>& ratios = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7,
                                                              0.8, 0.9});

MethodSpec default_method(MethodKind kind);

}  // namespace macgaze
