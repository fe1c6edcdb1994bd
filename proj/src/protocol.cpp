#include "macgaze/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

namespace macgaze {

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::no_calibration: return "no_calibration";
    case MethodKind::one_off: return "one_off";
    case MethodKind::oracle_motion_aware: return "oracle_motion_aware";
    case MethodKind::macgaze_classifier: return "macgaze_classifier";
    case MethodKind::macgaze_hybrid: return "macgaze_hybrid";
    case MethodKind::time_based: return "time_based";
  }
  return "?";
}

MethodKind method_from_string(const std::string& s) {
  for (MethodKind k : {MethodKind::no_calibration, MethodKind::one_off,
                       MethodKind::oracle_motion_aware, MethodKind::macgaze_classifier,
                       MethodKind::macgaze_hybrid, MethodKind::time_based})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown method: " + s);
}

MethodSpec default_method(MethodKind kind) {
  MethodSpec m;
  m.kind = kind;
  switch (kind) {
    case MethodKind::macgaze_hybrid: m.trigger.mode = TriggerMode::hybrid; break;
    case MethodKind::macgaze_classifier: m.trigger.mode = TriggerMode::classifier_only; break;
    case MethodKind::time_based: m.trigger.mode = TriggerMode::time_based; break;
    default: break;
  }
  return m;
}

void ProtocolConfig::validate() const {
  if (!(calib_fraction > 0.0 && calib_fraction < 1.0))
    throw ConfigError("calib_fraction must be in (0,1)");
  if (seeds.empty()) throw ConfigError("at least one seed required");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  synth.validate();
  har.validate();
}

TriggerCountStats trigger_stats(const std::vector<int>& counts) {
  if (counts.empty()) throw std::invalid_argument("trigger_stats: need at least one session");
  TriggerCountStats s;
  s.counts = counts;
  std::vector<int> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  const auto n = sorted.size();
  s.median = n % 2 == 1 ? sorted[n / 2]
                        : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return s;
}

namespace {

struct SegmentFrames {
  std::string label;
  std::size_t begin = 0, end = 0;  // frame index range
  double t_start = 0.0, t_end = 0.0;
};

std::vector<SegmentFrames> segment_frames(const SessionStream& s) {
  std::vector<SegmentFrames> out;
  for (std::size_t k = 0; k < s.meta.segments.size(); ++k) {
    const auto& seg = s.meta.segments[k];
    SegmentFrames sf;
    sf.label = seg.label;
    sf.t_start = seg.start;
    sf.t_end = seg.end;
    const bool last = k + 1 == s.meta.segments.size();
    sf.begin = s.frames.size();
    sf.end = 0;
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      const double t = s.frames[i].t;
      if (t >= seg.start && (t < seg.end || (last && t <= seg.end))) {
        sf.begin = std::min(sf.begin, i);
        sf.end = std::max(sf.end, i + 1);
      }
    }
    if (sf.begin < sf.end) out.push_back(sf);
  }
  return out;
}

std::vector<std::size_t> calib_indices(const SegmentFrames& seg, double fraction) {
  const auto n = seg.end - seg.begin;
  const auto take = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(seg.begin + i);
  return out;
}

CalibrationSet make_calib_set(const SessionStream& s, const std::vector<std::size_t>& idx,
                              int task_id, const std::string& label) {
  CalibrationSet set;
  set.task_id = task_id;
  set.segment_label = label;
  for (auto i : idx) {
    const auto& f = s.frames[i];
    if (!f.gaze) continue;
    set.features.push_back(f.feature);
    set.gazes.push_back(*f.gaze);
    set.raw_imu.push_back(f.imu.acc);
  }
  return set;
}

std::vector<Vec3> raw_of(const SessionStream& s, std::size_t begin, std::size_t end) {
  std::vector<Vec3> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(s.frames[i].imu.acc);
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
  return splitmix64(splitmix64(base) ^ splitmix64(fnv1a(tag)) ^ splitmix64(index + 1));
}

}  // namespace

HarModel train_protocol_har(const ProtocolConfig& cfg) {
  std::vector<std::string> labels;
  for (const auto& p : cfg.synth.profiles) {
    bool used = false;
    for (const auto& seg : cfg.synth.segments)
      if (seg.label == p.label) used = true;
    if (used) labels.push_back(p.label);
  }
  if (labels.size() < 2) throw ConfigError("need at least two motion classes for the detector");

  std::vector<MotionProfile> profiles;
  for (const auto& l : labels) profiles.push_back(cfg.synth.profile_for(l));

  HarConfig hc = cfg.har;
  hc.classes = static_cast<int>(labels.size());
  HarModel model(hc);
  model.init_params(cfg.har_train.seed);

  const auto set = sample_har_windows(profiles, cfg.har_windows_per_class, hc.window_len,
                                      cfg.synth.hz, cfg.har_train.seed);
  train_har(model, set.windows, set.labels, cfg.har_train);
  model.class_names = set.class_names;
  return model;
}

RunResult run_method_on_session(const SessionStream& session, const HarModel* har,
                                const MethodSpec& method, const ProtocolConfig& cfg,
                                std::uint64_t run_seed, int permutation) {
  RunResult rr;
  rr.permutation = permutation;
  rr.method = method.label();

  const auto segs = segment_frames(session);
  if (segs.empty()) throw ConfigError("session has no annotated segments");
  rr.start_motion = segs.front().label;
  if (method.needs_detector() && har == nullptr)
    throw ConfigError(method.label() + " requires a trained detector");

  const double hz = session.meta.hz;
  const int window_len = har ? har->config().window_len : 0;

  std::set<std::size_t> consumed;

  // fixed evaluation set for the trajectory: everything outside any
  // segment's potential calibration slice
  std::set<std::size_t> potential_calib;
  for (const auto& seg : segs)
    for (auto i : calib_indices(seg, cfg.calib_fraction)) potential_calib.insert(i);

  // per-motion models for the oracle; single model otherwise
  CalibratorModel model(static_cast<int>(session.feature_dim()));
  std::vector<CalibratorModel> oracle_models;
  ReplayBuffer buffer(cfg.replay_capacity);
  HarModel local_har = har ? *har : HarModel(HarConfig::tiny_preset(2));

  auto trajectory_point = [&](int event_index, double t) {
    for (const auto& seg : segs) {
      std::vector<double> dists;
      for (std::size_t i = seg.begin; i < seg.end; ++i) {
        if (potential_calib.count(i)) continue;
        const auto& f = session.frames[i];
        if (!f.gaze) continue;
        dists.push_back((model.predict(f.feature) - *f.gaze).norm());
      }
      if (dists.empty()) continue;
      const auto st = stats_of(dists);
      double mse = 0.0;
      for (double d : dists) mse += d * d;
      mse /= static_cast<double>(dists.size());
      rr.trajectory.push_back({event_index, t, seg.label, st.mean, mse});
    }
  };

  if (method.kind == MethodKind::no_calibration) {
    for (std::size_t i = 0; i < session.frames.size(); ++i) {
      const auto& f = session.frames[i];
      if (!f.gaze) continue;
      if (!f.base_prediction)
        throw ConfigError("no_calibration requires base predictions in the session");
      const auto lbl = session.segment_label_at(f.t);
      rr.frames.push_back({f.t, lbl ? *lbl : (f.motion_label ? *f.motion_label : "unlabeled"),
                           (*f.base_prediction - *f.gaze).norm()});
    }
    return rr;
  }

  RecalibrateParams base_rp = method.calib;

  if (method.kind == MethodKind::oracle_motion_aware) {
    for (std::size_t k = 0; k < segs.size(); ++k) {
      if (!session.frames[segs[k].begin].motion_label && segs[k].label.empty())
        throw ConfigError("oracle_motion_aware requires motion labels");
      const auto idx = calib_indices(segs[k], cfg.calib_fraction);
      const auto set = make_calib_set(session, idx, static_cast<int>(k), segs[k].label);
      if (set.size() == 0) throw ConfigError("oracle calibration slice is empty");
      CalibratorModel fresh(static_cast<int>(session.feature_dim()));
      fresh.init_params(derive_seed(run_seed, "oracle-model", k));
      RecalibrateParams rp = base_rp;
      rp.seed = derive_seed(run_seed, "oracle-recal", k);
      oracle_models.push_back(recalibrate(fresh, set, ReplayBuffer(cfg.replay_capacity), rp));
      for (auto i : idx) consumed.insert(i);
      rr.calib_frames_used += idx.size();
    }
  } else {
    // initial calibration on the first segment
    const auto init_idx = calib_indices(segs.front(), cfg.calib_fraction);
    const auto init_set = make_calib_set(session, init_idx, 0, segs.front().label);
    if (init_set.size() == 0) throw ConfigError("initial calibration slice is empty");
    CalibratorModel fresh(static_cast<int>(session.feature_dim()));
    fresh.init_params(derive_seed(run_seed, "calib-model"));
    RecalibrateParams rp = base_rp;
    rp.seed = derive_seed(run_seed, "recal-init");
    model = recalibrate(fresh, init_set, ReplayBuffer(cfg.replay_capacity), rp);
    for (auto i : init_idx) consumed.insert(i);
    rr.calib_frames_used += init_idx.size();

    auto buf_rng = substream(run_seed, "buffer", 0);
    buffer = update_buffer(buffer, init_set, buf_rng);

    if (method.is_streaming()) {
      TriggerParams tp = method.trigger;
      tp.seed = derive_seed(run_seed, "trigger");
      TriggerState state(tp);
      state.initialize(0.0, init_set.raw_imu);
      trajectory_point(0, session.frames[init_idx.empty() ? 0 : init_idx.back()].t);

      int fire_count = 0;
      const double t_end = session.frames.back().t;
      const int raw_span = std::max(1, static_cast<int>(std::llround(tp.consensus_window_s * hz)));
      for (int k = 1;; ++k) {
        const double t = static_cast<double>(k) * tp.vote_stride_s;
        if (t > t_end) break;
        const auto i = std::min(session.frames.size() - 1,
                                static_cast<std::size_t>(std::llround(t * hz)));
        TriggerDecision d;
        if (method.kind == MethodKind::time_based) {
          d = state.step_with_prediction(t, 0, {});
        } else {
          if (static_cast<int>(i) + 1 < window_len) continue;  // not enough history yet
          ImuWindow w;
          w.start_index = i + 1 - static_cast<std::size_t>(window_len);
          w.samples.resize(window_len, 3);
          for (int r = 0; r < window_len; ++r)
            w.samples.row(r) = session.frames[w.start_index + static_cast<std::size_t>(r)]
                                   .imu.acc.transpose();
          const auto lo = static_cast<std::size_t>(
              std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - raw_span + 1));
          const auto consensus_raw = raw_of(session, lo, i + 1);
          d = state.step(t, w, local_har, consensus_raw);
        }
        rr.decisions.push_back(d);
        if (!d.fire) continue;

        ++fire_count;
        rr.fire_times.push_back(t);
        const auto seg_idx = session.segment_index_at(t);
        if (!seg_idx) continue;
        // map meta segment index onto the frame-range table
        const auto& meta_seg = session.meta.segments[*seg_idx];
        const SegmentFrames* cur = nullptr;
        for (const auto& sf : segs)
          if (sf.label == meta_seg.label && sf.t_start == meta_seg.start) cur = &sf;
        if (!cur) continue;
        const auto idx = calib_indices(*cur, cfg.calib_fraction);
        const auto set = make_calib_set(session, idx, fire_count, cur->label);
        if (set.size() == 0) continue;
        RecalibrateParams frp = base_rp;
        frp.seed = derive_seed(run_seed, "recal-fire", static_cast<std::uint64_t>(fire_count));
        model = recalibrate(model, set, buffer, frp);
        auto rng = substream(run_seed, "buffer", static_cast<std::uint64_t>(fire_count));
        buffer = update_buffer(buffer, set, rng);
        if (method.kind == MethodKind::macgaze_hybrid) {
          const auto lo = static_cast<std::size_t>(
              std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - raw_span + 1));
          state.absorb_task(raw_of(session, lo, i + 1));
        }
        std::size_t newly = 0;
        for (auto ii : idx)
          if (consumed.insert(ii).second) ++newly;
        rr.calib_frames_used += newly;
        trajectory_point(fire_count, t);
      }
    } else {
      trajectory_point(0, session.frames[init_idx.back()].t);
    }
  }

  // final evaluation with the resulting model(s)
  for (std::size_t i = 0; i < session.frames.size(); ++i) {
    if (consumed.count(i)) continue;
    const auto& f = session.frames[i];
    if (!f.gaze) continue;
    const CalibratorModel* m = &model;
    std::string motion;
    const auto seg_idx = session.segment_index_at(f.t);
    if (seg_idx) motion = session.meta.segments[*seg_idx].label;
    if (method.kind == MethodKind::oracle_motion_aware) {
      if (!seg_idx) continue;  // oracle needs a labeled segment
      // oracle models are indexed by the frame-range table order
      const auto& meta_seg = session.meta.segments[*seg_idx];
      std::size_t oi = segs.size();
      for (std::size_t k = 0; k < segs.size(); ++k)
        if (segs[k].label == meta_seg.label && segs[k].t_start == meta_seg.start) oi = k;
      if (oi >= oracle_models.size()) continue;
      m = &oracle_models[oi];
    }
    if (motion.empty()) motion = f.motion_label ? *f.motion_label : "unlabeled";
    rr.frames.push_back({f.t, motion, (m->predict(f.feature) - *f.gaze).norm()});
  }

  // disjointness audit: no evaluated frame may coincide with a consumed one
  std::set<double> consumed_times;
  for (auto i : consumed) consumed_times.insert(session.frames[i].t);
  rr.eval_calib_overlap = 0;
  for (const auto& fr : rr.frames)
    if (consumed_times.count(fr.t)) ++rr.eval_calib_overlap;

  return rr;
}

namespace {

struct RunJob {
  std::uint64_t seed;
  int permutation;
};

SessionStream make_session(const ProtocolConfig& cfg, std::uint64_t seed, int permutation) {
  SynthConfig variant = cfg.synth;
  const auto n = variant.segments.size();
  std::vector<SegmentSpec> rotated;
  for (std::size_t i = 0; i < n; ++i)
    rotated.push_back(variant.segments[(i + static_cast<std::size_t>(permutation)) % n]);
  variant.segments = std::move(rotated);
  variant.seed = derive_seed(seed, "session", static_cast<std::uint64_t>(permutation));
  variant.participant =
      "synth-s" + std::to_string(seed) + "-p" + std::to_string(permutation);
  return generate_session(variant);
}

void aggregate(Report& report, const std::string& method) {
  std::map<std::string, std::vector<double>> by_motion;
  std::vector<double> all;
  std::vector<int> counts;
  for (const auto& rr : report.runs) {
    if (rr.method != method) continue;
    for (const auto& fr : rr.frames) {
      by_motion[fr.motion].push_back(fr.distance);
      all.push_back(fr.distance);
    }
    counts.push_back(static_cast<int>(rr.fire_times.size()));
  }
  auto& cells = report.cells[method];
  for (auto& [motion, dists] : by_motion) {
    const auto st = stats_of(dists);
    cells[motion] = {st.mean, st.std, st.n};
  }
  if (!all.empty()) {
    const auto st = stats_of(all);
    cells["average"] = {st.mean, st.std, st.n};
  }
  if (!counts.empty()) report.triggers[method] = trigger_stats(counts);
}

Report run_jobs(const MethodSpec& method, const ProtocolConfig& cfg, const HarModel* har) {
  std::vector<RunJob> jobs;
  const int n_perm = cfg.permute_start ? static_cast<int>(cfg.synth.segments.size()) : 1;
  for (auto seed : cfg.seeds)
    for (int p = 0; p < n_perm; ++p) jobs.push_back({seed, p});

  Report report;
  report.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const auto j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const auto& job = jobs[j];
      const SessionStream session = make_session(cfg, job.seed, job.permutation);
      const std::uint64_t run_seed =
          derive_seed(job.seed, "run", static_cast<std::uint64_t>(job.permutation));
      RunResult rr = run_method_on_session(session, har, method, cfg, run_seed, job.permutation);
      rr.seed = job.seed;
      report.runs[j] = std::move(rr);
    }
  };
  if (cfg.threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < cfg.threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  aggregate(report, method.label());
  return report;
}

}  // namespace

Report run_protocol_with_har(const MethodSpec& method, const ProtocolConfig& cfg, HarModel& har) {
  cfg.validate();
  return run_jobs(method, cfg, &har);
}

Report run_protocol(const MethodSpec& method, const ProtocolConfig& cfg) {
  cfg.validate();
  if (method.needs_detector()) {
    HarModel har = train_protocol_har(cfg);
    return run_jobs(method, cfg, &har);
  }
  return run_jobs(method, cfg, nullptr);
}

MotionCell recompute_cell(const Report& report, const std::string& method,
                          const std::string& motion) {
  std::vector<double> dists;
  for (const auto& rr : report.runs) {
    if (rr.method != method) continue;
    for (const auto& fr : rr.frames)
      if (motion == "average" || fr.motion == motion) dists.push_back(fr.distance);
  }
  if (dists.empty()) return {};
  const auto st = stats_of(dists);
  return {st.mean, st.std, st.n};
}

OneoffMatrix run_oneoff_matrix(const ProtocolConfig& cfg) {
  cfg.validate();
  OneoffMatrix mx;
  for (const auto& seg : cfg.synth.segments) mx.motions.push_back(seg.label);
  const auto n = mx.motions.size();
  std::vector<std::vector<std::vector<double>>> pools(
      n, std::vector<std::vector<double>>(n));
  mx.per_seed_diag_mean.reserve(cfg.seeds.size());
  mx.per_seed_offdiag_mean.reserve(cfg.seeds.size());

  for (auto seed : cfg.seeds) {
    const SessionStream session = make_session(cfg, seed, 0);
    const std::uint64_t run_seed = derive_seed(seed, "run", 0);
    const auto segs = segment_frames(session);
    if (segs.size() != n) throw ConfigError("segment count mismatch in one-off matrix");

    std::set<std::size_t> all_calib;
    std::vector<std::vector<std::size_t>> splits;
    for (const auto& seg : segs) {
      auto idx = calib_indices(seg, cfg.calib_fraction);
      for (auto i : idx) all_calib.insert(i);
      splits.push_back(std::move(idx));
    }

    double diag_sum = 0.0, off_sum = 0.0;
    std::size_t diag_n = 0, off_n = 0;
    for (std::size_t train = 0; train < n; ++train) {
      const auto set =
          make_calib_set(session, splits[train], static_cast<int>(train), segs[train].label);
      CalibratorModel fresh(static_cast<int>(session.feature_dim()));
      fresh.init_params(derive_seed(run_seed, "oneoff-model", train));
      RecalibrateParams rp;
      rp.seed = derive_seed(run_seed, "oneoff-recal", train);
      const CalibratorModel m = recalibrate(fresh, set, ReplayBuffer(), rp);

      for (std::size_t test = 0; test < n; ++test) {
        for (std::size_t i = segs[test].begin; i < segs[test].end; ++i) {
          if (all_calib.count(i)) continue;
          const auto& f = session.frames[i];
          if (!f.gaze) continue;
          const double dist = (m.predict(f.feature) - *f.gaze).norm();
          pools[test][train].push_back(dist);
          if (test == train) {
            diag_sum += dist;
            ++diag_n;
          } else {
            off_sum += dist;
            ++off_n;
          }
        }
      }
    }
    mx.per_seed_diag_mean.push_back(diag_sum / static_cast<double>(std::max<std::size_t>(1, diag_n)));
    mx.per_seed_offdiag_mean.push_back(off_sum / static_cast<double>(std::max<std::size_t>(1, off_n)));
  }

  mx.mean.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  mx.std.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto st = stats_of(pools[i][j]);
      mx.mean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = st.mean;
      mx.std(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = st.std;
    }
  return mx;
}

AblationReport run_ablations(const ProtocolConfig& cfg) {
  cfg.validate();
  HarModel har = train_protocol_har(cfg);
  AblationReport ab;

  ab.full = run_jobs(default_method(MethodKind::macgaze_hybrid), cfg, &har);
  ab.without_hybrid = run_jobs(default_method(MethodKind::macgaze_classifier), cfg, &har);

  MethodSpec no_replay = default_method(MethodKind::macgaze_hybrid);
  no_replay.calib.replay_ratio = 0.0;
  Report without_replay = run_jobs(no_replay, cfg, &har);
  // rename so the two hybrid variants stay distinguishable in reports
  for (auto& rr : without_replay.runs) rr.method = "macgaze_hybrid_no_replay";
  Report renamed;
  renamed.runs = std::move(without_replay.runs);
  aggregate(renamed, "macgaze_hybrid_no_replay");
  ab.without_replay = std::move(renamed);

  // time-based arm with per-session fire counts matched to the full system
  Report timed;
  const int n_perm = cfg.permute_start ? static_cast<int>(cfg.synth.segments.size()) : 1;
  for (auto seed : cfg.seeds) {
    for (int p = 0; p < n_perm; ++p) {
      int fires = 0;
      for (const auto& rr : ab.full.runs)
        if (rr.seed == seed && rr.permutation == p) fires = static_cast<int>(rr.fire_times.size());
      const SessionStream session = make_session(cfg, seed, p);
      const double duration = session.frames.back().t;
      MethodSpec tm = default_method(MethodKind::time_based);
      tm.trigger.scheduled_fires.clear();
      for (int k = 1; k <= fires; ++k)
        tm.trigger.scheduled_fires.push_back(duration * static_cast<double>(k) /
                                             static_cast<double>(fires + 1));
      const std::uint64_t run_seed = derive_seed(seed, "run", static_cast<std::uint64_t>(p));
      RunResult rr = run_method_on_session(session, nullptr, tm, cfg, run_seed, p);
      rr.seed = seed;
      timed.runs.push_back(std::move(rr));
    }
  }
  aggregate(timed, "time_based");
  ab.time_based = std::move(timed);
  return ab;
}

ReplaySweep sweep_replay(const ProtocolConfig& cfg, const std::vector<double>& ratios) {
  cfg.validate();
  HarModel har = train_protocol_har(cfg);

  ReplaySweep sw;
  sw.ratios = ratios;
  const int n_perm = cfg.permute_start ? static_cast<int>(cfg.synth.segments.size()) : 1;
  for (int p = 0; p < n_perm; ++p)
    sw.start_motions.push_back(
        cfg.synth.segments[static_cast<std::size_t>(p) % cfg.synth.segments.size()].label);
  sw.mean.resize(static_cast<Eigen::Index>(ratios.size()), n_perm);
  sw.std.resize(static_cast<Eigen::Index>(ratios.size()), n_perm);

  for (std::size_t ri = 0; ri < ratios.size(); ++ri) {
    MethodSpec spec = default_method(MethodKind::macgaze_hybrid);
    spec.calib.replay_ratio = ratios[ri];
    const Report rep = run_jobs(spec, cfg, &har);

    std::vector<std::vector<double>> per_perm(static_cast<std::size_t>(n_perm));
    std::map<std::uint64_t, std::vector<double>> retention_by_seed;
    for (const auto& rr : rep.runs) {
      for (const auto& fr : rr.frames)
        per_perm[static_cast<std::size_t>(rr.permutation)].push_back(fr.distance);
      // first-task error at the last calibration event
      double last_first_task = std::numeric_limits<double>::quiet_NaN();
      int best_event = -1;
      for (const auto& tp : rr.trajectory)
        if (tp.segment == rr.start_motion && tp.event_index >= best_event) {
          best_event = tp.event_index;
          last_first_task = tp.mean_cm;
        }
      if (best_event >= 0) retention_by_seed[rr.seed].push_back(last_first_task);
    }
    for (int p = 0; p < n_perm; ++p) {
      const auto st = stats_of(per_perm[static_cast<std::size_t>(p)]);
      sw.mean(static_cast<Eigen::Index>(ri), p) = st.mean;
      sw.std(static_cast<Eigen::Index>(ri), p) = st.std;
    }
    auto& ret = sw.retention[ratios[ri]];
    for (auto seed : cfg.seeds) {
      const auto& v = retention_by_seed[seed];
      ret.push_back(v.empty() ? std::numeric_limits<double>::quiet_NaN()
                              : std::accumulate(v.begin(), v.end(), 0.0) /
                                    static_cast<double>(v.size()));
    }
  }
  return sw;
}

}  // namespace macgaze
