#pragma once

#include <map>
#include <string>
#include <vector>

#include "macgaze/nn.hpp"
#include "macgaze/session.hpp"

namespace macgaze {

/// Personal gaze calibrator: 2-layer MLP mapping a visual feature vector
/// to a 2-D point of gaze in screen cm. Prediction is stateless and
/// const; training goes through accumulate_gradients.
class CalibratorModel {
 public:
  explicit CalibratorModel(int feature_dim = 256, int hidden = 128);

  void init_params(std::uint64_t seed);
  void zero_init();

  Vec2 predict(const VecX& feature) const;

  int feature_dim() const { return d_; }
  int hidden_dim() const { return hidden_; }
  std::vector<nn::Param*> params();

  /// Accumulate weighted gradients of the per-sample Euclidean loss
  /// ||target - predict(feature)||. Returns the unweighted distance.
  double accumulate_gradients(const VecX& feature, const Vec2& target, double weight);

  /// Direct weight access for constructing exact affine calibrators.
  nn::Param& w1() { return w1_; }
  nn::Param& b1() { return b1_; }
  nn::Param& w2() { return w2_; }
  nn::Param& b2() { return b2_; }

 private:
  int d_, hidden_;
  nn::Param w1_, b1_, w2_, b2_;
};

Vec2 predict_gaze(const CalibratorModel& m, const VecX& feature);

/// Stored (feature, raw IMU, gaze) triples from observed tasks, kept
/// balanced across tasks under a fixed capacity.
struct ReplayEntry {
  VecX feature;
  Vec3 imu = Vec3::Zero();
  Vec2 gaze = Vec2::Zero();
  int task_id = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 2000) : capacity_(capacity) {}

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<ReplayEntry>& entries() const { return entries_; }
  std::map<int, std::size_t> per_task_counts() const;

  /// Insert one task's triples, then restore per-task balance by evicting
  /// uniformly at random from the most-represented task (ties toward the
  /// oldest) until the buffer fits its capacity. Under capacity nothing
  /// is evicted.
  void add_task(std::vector<ReplayEntry> task_entries, std::mt19937_64& rng);

 private:
  std::size_t capacity_;
  std::vector<ReplayEntry> entries_;
  std::vector<int> task_order_;  // absorption order of task ids
};

/// Feature/gaze pairs collected for one recalibration.
struct CalibrationSet {
  std::vector<VecX> features;
  std::vector<Vec2> gazes;
  std::vector<Vec3> raw_imu;  // aligned with features; may be empty
  int task_id = 0;
  std::string segment_label;

  std::size_t size() const { return features.size(); }
};

/// L_C = mean calibration distance + alpha * mean replay distance.
/// An empty buffer contributes zero replay term.
double combined_loss(const CalibratorModel& m, const CalibrationSet& calib,
                     const ReplayBuffer& buffer, double alpha);

enum class ReplayMode {
  batch_composition,  // replay_ratio of each batch drawn from the buffer
  loss_weight,        // fixed half/half batches, replay term reweighted
};

struct RecalibrateParams {
  double alpha = 1.0;
  double replay_ratio = 0.7;
  ReplayMode replay_mode = ReplayMode::batch_composition;
  double lr = 1e-3;
  int batch = 64;
  int max_epochs = 200;
  int patience = 10;
  double min_delta = 1e-4;
  double holdout_fraction = 0.1;
  bool gradient_check = false;  // debug: verify analytic grads on entry
  std::uint64_t seed = 0;
};

/// Train a copy of m on the calibration set plus replay samples, early
/// stopping on a held-out slice of the calibration data. The buffer is
/// never modified. First calibration (empty buffer) trains on the
/// calibration data alone.
CalibratorModel recalibrate(const CalibratorModel& m, const CalibrationSet& calib,
                            const ReplayBuffer& buffer, const RecalibrateParams& params);

/// Insert the task's triples into a copy of the buffer (uniform
/// downsample if larger than capacity) and rebalance. The model is
/// untouched.
ReplayBuffer update_buffer(const ReplayBuffer& buffer, const CalibrationSet& calib,
                           std::mt19937_64& rng);

void save_calibrator(CalibratorModel& m, const std::string& path);
CalibratorModel load_calibrator(const std::string& path);
void save_replay_buffer(const ReplayBuffer& b, const std::string& path);
ReplayBuffer load_replay_buffer(const std::string& path);

}  // namespace macgaze
