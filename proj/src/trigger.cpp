#include "macgaze/trigger.hpp"

#include <algorithm>
#include <cmath>

namespace macgaze {

std::string to_string(TriggerMode m) {
  switch (m) {
    case TriggerMode::hybrid: return "hybrid";
    case TriggerMode::classifier_only: return "classifier_only";
    case TriggerMode::time_based: return "time_based";
  }
  return "?";
}

std::string to_string(TriggerReason r) {
  switch (r) {
    case TriggerReason::none: return "none";
    case TriggerReason::activity_change: return "activity_change";
    case TriggerReason::novel_pattern: return "novel_pattern";
    case TriggerReason::timer: return "timer";
  }
  return "?";
}

TriggerMode trigger_mode_from_string(const std::string& s) {
  if (s == "hybrid") return TriggerMode::hybrid;
  if (s == "classifier_only") return TriggerMode::classifier_only;
  if (s == "time_based") return TriggerMode::time_based;
  throw ConfigError("unknown trigger mode: " + s);
}

int TriggerParams::votes_required() const {
  return std::max(1, static_cast<int>(std::llround(consensus_window_s / vote_stride_s)));
}

TriggerState::TriggerState(TriggerParams params) : params_(params) {
  if (!(params_.consensus_window_s > 0) || !(params_.vote_stride_s > 0))
    throw ConfigError("consensus window and vote stride must be positive");
  if (!(params_.tau > 0 && params_.tau <= 1)) throw ConfigError("tau must be in (0,1]");
  if (!(params_.tau_i > 0 && params_.tau_i < 1)) throw ConfigError("tau_i must be in (0,1)");
  if (!(params_.rho >= 0 && params_.rho <= 1)) throw ConfigError("rho must be in [0,1]");
}

void TriggerState::initialize(double t, const std::vector<Vec3>& initial_raw) {
  initialized_ = true;
  last_fire_t_ = t;
  if (params_.mode == TriggerMode::time_based) return;  // no detector state needed
  absorb_task(initial_raw);
}

std::size_t TriggerState::raw_buffer_size() const {
  std::size_t n = 0;
  for (const auto& t : tasks_) n += t.size();
  return n;
}

void TriggerState::refit() {
  std::vector<Vec3> merged;
  merged.reserve(raw_buffer_size());
  for (const auto& t : tasks_) merged.insert(merged.end(), t.begin(), t.end());
  if (merged.size() < 10) return;  // keep previous model until enough data
  GmmFitOptions opts;
  opts.k_max = params_.gmm_k_max;
  opts.seed = splitmix64(params_.seed + static_cast<std::uint64_t>(absorb_count_));
  gmm_ = fit_gmm(merged, opts);
}

void TriggerState::absorb_task(const std::vector<Vec3>& raw_samples) {
  if (raw_samples.empty()) return;
  ++absorb_count_;
  std::vector<Vec3> kept;
  if (raw_samples.size() > params_.absorb_downsample) {
    kept.reserve(params_.absorb_downsample);
    const double step =
        static_cast<double>(raw_samples.size()) / static_cast<double>(params_.absorb_downsample);
    for (std::size_t i = 0; i < params_.absorb_downsample; ++i)
      kept.push_back(raw_samples[static_cast<std::size_t>(i * step)]);
  } else {
    kept = raw_samples;
  }
  tasks_.push_back(std::move(kept));

  auto evict_rng = substream(params_.seed, "trigger-evict", static_cast<std::uint64_t>(absorb_count_));
  while (raw_buffer_size() > params_.buffer_cap) {
    auto& oldest = tasks_.front();
    if (oldest.empty()) {
      tasks_.erase(tasks_.begin());
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, oldest.size() - 1);
    oldest.erase(oldest.begin() + static_cast<std::ptrdiff_t>(pick(evict_rng)));
  }
  refit();
}

TriggerDecision TriggerState::step(double t, const ImuWindow& window, HarModel& har,
                                   const std::vector<Vec3>& consensus_raw) {
  if (params_.mode == TriggerMode::time_based)
    return step_with_prediction(t, 0, consensus_raw);
  const ImuWindow normalized = z_normalize(window, har.input_stats);
  return step_with_prediction(t, har.predict_class(normalized), consensus_raw);
}

TriggerDecision TriggerState::step_with_prediction(double t, int predicted_label,
                                                   const std::vector<Vec3>& consensus_raw) {
  if (!initialized_) throw std::logic_error("trigger stepped before first calibration");
  TriggerDecision d;
  d.t = t;

  if (params_.mode == TriggerMode::time_based) {
    if (!params_.scheduled_fires.empty()) {
      if (next_scheduled_ < params_.scheduled_fires.size() &&
          t >= params_.scheduled_fires[next_scheduled_]) {
        ++next_scheduled_;
        d.fire = true;
        d.reason = TriggerReason::timer;
        last_fire_t_ = t;
      }
    } else if (t - last_fire_t_ >= params_.time_interval_s) {
      d.fire = true;
      d.reason = TriggerReason::timer;
      last_fire_t_ = t;
    }
    return d;
  }

  votes_.emplace_back(t, predicted_label);
  const double horizon = t - params_.consensus_window_s;
  while (!votes_.empty() && votes_.front().first <= horizon) votes_.pop_front();
  if (static_cast<int>(votes_.size()) < params_.votes_required()) return d;

  std::vector<int> preds;
  preds.reserve(votes_.size());
  for (const auto& [vt, vl] : votes_) preds.push_back(vl);
  const auto stable = majority_vote(preds, params_.tau);
  if (!stable) return d;
  d.stable_label = *stable;

  const bool changed = current_stable_.has_value() && *current_stable_ != *stable;
  current_stable_ = *stable;

  if (params_.mode == TriggerMode::classifier_only) {
    if (changed) {
      d.fire = true;
      d.reason = TriggerReason::activity_change;
      last_fire_t_ = t;
    }
    return d;
  }

  // hybrid: a stable activity change gates the GMM novelty check
  const bool want_check =
      changed || (params_.continuous_novelty && t - last_fire_t_ >= params_.consensus_window_s);
  if (want_check && gmm_.fitted() && !consensus_raw.empty()) {
    const double r_t = outlier_ratio(gmm_, consensus_raw, params_.tau_i);
    d.outlier_ratio = r_t;
    if (r_t > params_.rho) {
      d.fire = true;
      d.reason = TriggerReason::novel_pattern;
      last_fire_t_ = t;
    }
  }
  return d;
}

}  // namespace macgaze
