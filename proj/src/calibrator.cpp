#include "macgaze/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace macgaze {

using nlohmann::json;

CalibratorModel::CalibratorModel(int feature_dim, int hidden)
    : d_(feature_dim),
      hidden_(hidden),
      w1_("calibrator.w1", hidden, feature_dim),
      b1_("calibrator.b1", hidden, 1),
      w2_("calibrator.w2", 2, hidden),
      b2_("calibrator.b2", 2, 1) {
  if (feature_dim < 1 || hidden < 1)
    throw std::invalid_argument("calibrator dimensions must be positive");
}

void CalibratorModel::init_params(std::uint64_t seed) {
  auto rng = substream(seed, "calibrator-init");
  std::normal_distribution<double> g1(0.0, std::sqrt(2.0 / d_));
  std::normal_distribution<double> g2(0.0, std::sqrt(2.0 / hidden_));
  for (Eigen::Index i = 0; i < w1_.value.rows(); ++i)
    for (Eigen::Index j = 0; j < w1_.value.cols(); ++j) w1_.value(i, j) = g1(rng);
  for (Eigen::Index i = 0; i < w2_.value.rows(); ++i)
    for (Eigen::Index j = 0; j < w2_.value.cols(); ++j) w2_.value(i, j) = g2(rng);
  b1_.value.setZero();
  b2_.value.setZero();
}

void CalibratorModel::zero_init() {
  for (auto* p : params()) {
    p->value.setZero();
    p->grad.setZero();
  }
}

std::vector<nn::Param*> CalibratorModel::params() { return {&w1_, &b1_, &w2_, &b2_}; }

Vec2 CalibratorModel::predict(const VecX& feature) const {
  if (feature.size() != d_)
    throw std::invalid_argument("feature dimension " + std::to_string(feature.size()) +
                                ", calibrator expects " + std::to_string(d_));
  const VecX h = (w1_.value * feature + b1_.value.col(0)).cwiseMax(0.0);
  return w2_.value * h + b2_.value.col(0);
}

double CalibratorModel::accumulate_gradients(const VecX& feature, const Vec2& target,
                                             double weight) {
  if (feature.size() != d_) throw std::invalid_argument("feature dimension mismatch");
  const VecX pre = w1_.value * feature + b1_.value.col(0);
  const VecX h = pre.cwiseMax(0.0);
  const Vec2 y = w2_.value * h + b2_.value.col(0);
  const Vec2 e = y - target;
  const double dist = e.norm();
  if (dist > 1e-12) {
    const Vec2 dy = (weight / dist) * e;
    w2_.grad += dy * h.transpose();
    b2_.grad.col(0) += dy;
    VecX dh = w2_.value.transpose() * dy;
    for (Eigen::Index i = 0; i < dh.size(); ++i)
      if (pre[i] <= 0.0) dh[i] = 0.0;
    w1_.grad += dh * feature.transpose();
    b1_.grad.col(0) += dh;
  }
  return dist;
}

Vec2 predict_gaze(const CalibratorModel& m, const VecX& feature) { return m.predict(feature); }

std::map<int, std::size_t> ReplayBuffer::per_task_counts() const {
  std::map<int, std::size_t> out;
  for (const auto& e : entries_) ++out[e.task_id];
  return out;
}

void ReplayBuffer::add_task(std::vector<ReplayEntry> task_entries, std::mt19937_64& rng) {
  if (!task_entries.empty()) {
    const int task = task_entries.front().task_id;
    for (const auto& e : task_entries)
      if (e.task_id != task)
        throw std::invalid_argument("add_task: entries must share one task id");
    if (std::find(task_order_.begin(), task_order_.end(), task) == task_order_.end())
      task_order_.push_back(task);
    // uniform (evenly spaced) downsample if a single task exceeds capacity
    if (task_entries.size() > capacity_) {
      std::vector<ReplayEntry> kept;
      kept.reserve(capacity_);
      const double step = static_cast<double>(task_entries.size()) / static_cast<double>(capacity_);
      for (std::size_t i = 0; i < capacity_; ++i)
        kept.push_back(task_entries[static_cast<std::size_t>(i * step)]);
      task_entries = std::move(kept);
    }
    entries_.insert(entries_.end(), std::make_move_iterator(task_entries.begin()),
                    std::make_move_iterator(task_entries.end()));
  }
  while (entries_.size() > capacity_) {
    // evict one entry uniformly from the most-represented task
    const auto counts = per_task_counts();
    int victim_task = -1;
    std::size_t victim_count = 0;
    for (int t : task_order_) {
      const auto it = counts.find(t);
      if (it == counts.end()) continue;
      if (it->second > victim_count) {  // ties resolve to the oldest task
        victim_count = it->second;
        victim_task = t;
      }
    }
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].task_id == victim_task) members.push_back(i);
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(members[pick(rng)]));
  }
}

double combined_loss(const CalibratorModel& m, const CalibrationSet& calib,
                     const ReplayBuffer& buffer, double alpha) {
  if (calib.size() == 0) throw std::invalid_argument("combined_loss: empty calibration set");
  if (calib.features.size() != calib.gazes.size())
    throw std::invalid_argument("combined_loss: features/gazes length mismatch");
  double calib_term = 0.0;
  for (std::size_t i = 0; i < calib.size(); ++i)
    calib_term += (m.predict(calib.features[i]) - calib.gazes[i]).norm();
  calib_term /= static_cast<double>(calib.size());
  double replay_term = 0.0;
  if (!buffer.empty()) {
    for (const auto& e : buffer.entries()) replay_term += (m.predict(e.feature) - e.gaze).norm();
    replay_term /= static_cast<double>(buffer.size());
  }
  return calib_term + alpha * replay_term;
}

namespace {

double mean_distance(const CalibratorModel& m, const std::vector<VecX>& features,
                     const std::vector<Vec2>& gazes, const std::vector<std::size_t>& subset) {
  if (subset.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (auto i : subset) sum += (m.predict(features[i]) - gazes[i]).norm();
  return sum / static_cast<double>(subset.size());
}

void run_gradient_check(CalibratorModel& m, const CalibrationSet& calib) {
  auto rng = substream(1234, "calib-gradcheck");
  std::uniform_int_distribution<std::size_t> pick(0, calib.size() - 1);
  const std::size_t i = pick(rng);
  for (auto* p : m.params()) p->zero_grad();
  m.accumulate_gradients(calib.features[i], calib.gazes[i], 1.0);
  for (auto* p : m.params()) {
    const MatX analytic = p->grad;
    const MatX numeric = nn::numeric_gradient(
        *p, [&] { return (m.predict(calib.features[i]) - calib.gazes[i]).norm(); });
    if (nn::relative_error(analytic, numeric) > 1e-4)
      throw TrainingError("calibrator gradient check failed for " + p->name);
  }
  for (auto* p : m.params()) p->zero_grad();
}

}  // namespace

CalibratorModel recalibrate(const CalibratorModel& m, const CalibrationSet& calib,
                            const ReplayBuffer& buffer, const RecalibrateParams& params) {
  if (calib.size() == 0) throw std::invalid_argument("recalibrate: empty calibration set");
  if (calib.features.size() != calib.gazes.size())
    throw std::invalid_argument("recalibrate: features/gazes length mismatch");

  CalibratorModel model = m;
  if (params.gradient_check) run_gradient_check(model, calib);

  // held-out slice of the calibration data for early stopping
  std::vector<std::size_t> idx(calib.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto split_rng = substream(params.seed, "calib-split");
  std::shuffle(idx.begin(), idx.end(), split_rng);
  const auto hold_n = static_cast<std::size_t>(
      std::floor(static_cast<double>(calib.size()) * params.holdout_fraction));
  std::vector<std::size_t> hold_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(hold_n));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(hold_n), idx.end());
  if (train_idx.empty()) {
    train_idx = hold_idx;  // degenerate tiny set: monitor on the train data
    hold_idx.clear();
  }

  const bool use_replay = !buffer.empty() && params.replay_ratio > 0.0;
  int batch_replay = 0;
  double replay_weight = params.alpha;
  if (use_replay) {
    if (params.replay_mode == ReplayMode::batch_composition) {
      batch_replay = static_cast<int>(
          std::llround(static_cast<double>(params.batch) * params.replay_ratio));
      batch_replay = std::min(batch_replay, params.batch - 1);
    } else {
      batch_replay = params.batch / 2;
      const double r = std::min(params.replay_ratio, 0.99);
      replay_weight = params.alpha * r / (1.0 - r);
    }
  }
  const int batch_calib = params.batch - batch_replay;

  auto all_params = model.params();
  nn::Adam adam(all_params, params.lr);
  auto train_rng = substream(params.seed, "calib-train");
  std::uniform_int_distribution<std::size_t> buffer_pick(0, use_replay ? buffer.size() - 1 : 0);

  auto monitor = [&] {
    return mean_distance(model, calib.features, calib.gazes,
                         hold_idx.empty() ? train_idx : hold_idx);
  };

  double best = monitor();
  std::vector<MatX> best_state = nn::snapshot(all_params);
  int stall = 0;

  for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), train_rng);
    std::size_t cursor = 0;
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    while (cursor < train_idx.size()) {
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(batch_calib),
                                              train_idx.size() - cursor);
      adam.zero_grad();
      double batch_loss = 0.0;
      const double wc = 1.0 / static_cast<double>(take);
      for (std::size_t i = 0; i < take; ++i) {
        const auto s = train_idx[cursor + i];
        batch_loss += wc * model.accumulate_gradients(calib.features[s], calib.gazes[s], wc);
      }
      if (use_replay && batch_replay > 0) {
        const double wr = replay_weight / static_cast<double>(batch_replay);
        for (int i = 0; i < batch_replay; ++i) {
          const auto& e = buffer.entries()[buffer_pick(train_rng)];
          batch_loss += wr * model.accumulate_gradients(e.feature, e.gaze, wr);
        }
      }
      adam.step();
      cursor += take;
      epoch_loss += batch_loss;
      ++steps;
    }
    if (steps > 0 && !std::isfinite(epoch_loss))
      throw TrainingError("recalibrate: non-finite loss at epoch " + std::to_string(epoch));

    const double val = monitor();
    if (!std::isfinite(val))
      throw TrainingError("recalibrate: non-finite validation loss at epoch " +
                          std::to_string(epoch));
    if (val < best - params.min_delta) {
      best = val;
      best_state = nn::snapshot(all_params);
      stall = 0;
    } else if (++stall >= params.patience) {
      break;
    }
  }
  nn::restore(all_params, best_state);
  return model;
}

ReplayBuffer update_buffer(const ReplayBuffer& buffer, const CalibrationSet& calib,
                           std::mt19937_64& rng) {
  ReplayBuffer out = buffer;
  std::vector<ReplayEntry> entries;
  entries.reserve(calib.size());
  for (std::size_t i = 0; i < calib.size(); ++i) {
    ReplayEntry e;
    e.feature = calib.features[i];
    e.gaze = calib.gazes[i];
    e.imu = i < calib.raw_imu.size() ? calib.raw_imu[i] : Vec3::Zero();
    e.task_id = calib.task_id;
    entries.push_back(std::move(e));
  }
  out.add_task(std::move(entries), rng);
  return out;
}

namespace {

json matrix_to_json(const MatX& m) {
  json data = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

MatX matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  MatX m(rows, cols);
  std::size_t n = 0;
  for (Eigen::Index jj = 0; jj < cols; ++jj)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, jj) = j.at("data")[n++].get<double>();
  return m;
}

}  // namespace

void save_calibrator(CalibratorModel& m, const std::string& path) {
  json j;
  j["format"] = "macgaze-calibrator";
  j["version"] = 1;
  j["feature_dim"] = m.feature_dim();
  j["hidden"] = m.hidden_dim();
  json params = json::object();
  for (auto* p : m.params()) params[p->name] = matrix_to_json(p->value);
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << j.dump() << "\n";
}

CalibratorModel load_calibrator(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  if (j.value("format", "") != "macgaze-calibrator")
    throw ParseError(path + ": not a calibrator checkpoint");
  CalibratorModel m(j.at("feature_dim").get<int>(), j.at("hidden").get<int>());
  std::map<std::string, MatX> state;
  for (const auto& [name, jm] : j.at("params").items()) state[name] = matrix_from_json(jm);
  nn::load_state_dict(m.params(), state);
  return m;
}

void save_replay_buffer(const ReplayBuffer& b, const std::string& path) {
  json j;
  j["format"] = "macgaze-replay-buffer";
  j["version"] = 1;
  j["capacity"] = b.capacity();
  json entries = json::array();
  for (const auto& e : b.entries()) {
    json fe = json::array();
    for (Eigen::Index i = 0; i < e.feature.size(); ++i) fe.push_back(e.feature[i]);
    entries.push_back({{"feature", std::move(fe)},
                       {"imu", {e.imu.x(), e.imu.y(), e.imu.z()}},
                       {"gaze", {e.gaze.x(), e.gaze.y()}},
                       {"task", e.task_id}});
  }
  j["entries"] = std::move(entries);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << j.dump() << "\n";
}

ReplayBuffer load_replay_buffer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  if (j.value("format", "") != "macgaze-replay-buffer")
    throw ParseError(path + ": not a replay buffer snapshot");
  ReplayBuffer b(j.at("capacity").get<std::size_t>());
  std::mt19937_64 rng(0);  // capacity respected by construction; no eviction occurs
  std::map<int, std::vector<ReplayEntry>> by_task;
  for (const auto& je : j.at("entries")) {
    ReplayEntry e;
    const auto& jf = je.at("feature");
    e.feature.resize(static_cast<Eigen::Index>(jf.size()));
    for (Eigen::Index i = 0; i < e.feature.size(); ++i)
      e.feature[i] = jf[static_cast<std::size_t>(i)].get<double>();
    e.imu = Vec3(je.at("imu")[0].get<double>(), je.at("imu")[1].get<double>(),
                 je.at("imu")[2].get<double>());
    e.gaze = Vec2(je.at("gaze")[0].get<double>(), je.at("gaze")[1].get<double>());
    e.task_id = je.at("task").get<int>();
    by_task[e.task_id].push_back(std::move(e));
  }
  for (auto& [task, entries] : by_task) b.add_task(std::move(entries), rng);
  return b;
}

}  // namespace macgaze
