#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "macgaze/gmm.hpp"
#include "macgaze/motion_net.hpp"
#include "macgaze/session.hpp"

namespace macgaze {

/// Mode of preds iff its frequency ratio reaches tau, otherwise nullopt.
/// Ties break toward the earliest-seen label.
template <typename L>
std::optional<L> majority_vote(const std::vector<L>& preds, double tau) {
  if (preds.empty()) throw std::invalid_argument("majority_vote: empty prediction list");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("majority_vote: tau must be in (0,1]");
  std::vector<L> seen;
  std::vector<std::size_t> counts;
  for (const auto& p : preds) {
    bool found = false;
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (seen[i] == p) {
        ++counts[i];
        found = true;
        break;
      }
    if (!found) {
      seen.push_back(p);
      counts.push_back(1);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < seen.size(); ++i)
    if (counts[i] > counts[best]) best = i;  // earliest-seen wins ties
  const double ratio =
      static_cast<double>(counts[best]) / static_cast<double>(preds.size());
  if (ratio >= tau) return seen[best];
  return std::nullopt;
}

enum class TriggerMode { hybrid, classifier_only, time_based };
enum class TriggerReason { none, activity_change, novel_pattern, timer };

std::string to_string(TriggerMode m);
std::string to_string(TriggerReason r);
TriggerMode trigger_mode_from_string(const std::string& s);

struct TriggerParams {
  TriggerMode mode = TriggerMode::hybrid;
  double consensus_window_s = 4.0;  // c
  double vote_stride_s = 0.5;
  double tau = 0.75;    // consensus ratio threshold
  double tau_i = 0.95;  // likelihood confidence level
  double rho = 0.75;    // outlier ratio threshold
  double time_interval_s = 30.0;
  std::vector<double> scheduled_fires;  // time_based only: explicit schedule
  bool continuous_novelty = false;      // novelty check on every stable tick
  int gmm_k_max = 10;
  std::size_t buffer_cap = 4000;        // raw IMU samples across tasks
  std::size_t absorb_downsample = 500;  // per-task uniform downsample
  std::uint64_t seed = 0;

  int votes_required() const;
};

struct TriggerDecision {
  double t = 0.0;
  bool fire = false;
  TriggerReason reason = TriggerReason::none;
  std::optional<int> stable_label;
  std::optional<double> outlier_ratio;  // r_t when the novelty check ran
};

/// Per-session trigger state machine. In hybrid mode a stable consensus
/// label change gates a GMM novelty check over the consensus window's raw
/// samples; classifier_only fires on the label change alone; time_based
/// fires on a fixed interval.
class TriggerState {
 public:
  explicit TriggerState(TriggerParams params);

  /// First calibration completed: absorb its raw samples (fits the GMM)
  /// and start the clock for time-based firing.
  void initialize(double t, const std::vector<Vec3>& initial_raw);
  bool initialized() const { return initialized_; }

  /// Classify the (raw) window with the detector and advance the machine.
  TriggerDecision step(double t, const ImuWindow& window, HarModel& har,
                       const std::vector<Vec3>& consensus_raw);

  /// Advance with an externally supplied prediction (test/replay path).
  TriggerDecision step_with_prediction(double t, int predicted_label,
                                       const std::vector<Vec3>& consensus_raw);

  /// Merge fired-task raw samples into the buffer and refit the GMM.
  void absorb_task(const std::vector<Vec3>& raw_samples);

  const GmmModel& gmm() const { return gmm_; }
  std::optional<int> current_stable_label() const { return current_stable_; }
  std::size_t raw_buffer_size() const;
  const TriggerParams& params() const { return params_; }

 private:
  void refit();

  TriggerParams params_;
  bool initialized_ = false;
  std::deque<std::pair<double, int>> votes_;
  std::optional<int> current_stable_;
  std::vector<std::vector<Vec3>> tasks_;  // raw samples per absorbed task
  GmmModel gmm_;
  double last_fire_t_ = 0.0;
  int absorb_count_ = 0;
  std::size_t next_scheduled_ = 0;
};

}  // namespace macgaze
