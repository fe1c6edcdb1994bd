#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "macgaze/motion_net.hpp"
#include "macgaze/protocol.hpp"
#include "macgaze/report.hpp"
#include "macgaze/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace macgaze;

namespace {

json load_json_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
}

SynthConfig synth_from_json(const json& j, std::uint64_t seed) {
  const int motions = j.value("motions", 4);
  const int d = j.value("d", 256);
  const double segment_s = j.value("segment_s", 40.0);
  SynthConfig cfg = make_default_config(motions, d, segment_s, seed);
  cfg.feature_noise_std = j.value("feature_noise_std", cfg.feature_noise_std);
  if (j.contains("hz")) cfg.hz = j["hz"].get<double>();
  if (j.contains("family_seed")) cfg.family_seed = j["family_seed"].get<std::uint64_t>();
  return cfg;
}

HarConfig har_from_json(const json& j, int classes) {
  const std::string preset = j.value("preset", "desk");
  HarConfig hc = preset == "paper"  ? HarConfig::paper_preset(classes)
                 : preset == "tiny" ? HarConfig::tiny_preset(classes)
                                    : HarConfig::desk_preset(classes);
  if (j.contains("latent_dim")) hc.latent_dim = j["latent_dim"].get<int>();
  if (j.contains("recon_weight")) hc.recon_weight = j["recon_weight"].get<double>();
  if (j.contains("window_len")) hc.window_len = j["window_len"].get<int>();
  return hc;
}

ProtocolConfig protocol_from_json(const json& j, std::uint64_t seed, int threads) {
  ProtocolConfig cfg;
  cfg.synth = synth_from_json(j.value("synth", json::object()), seed);
  if (j.contains("seeds")) {
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  } else {
    cfg.seeds.clear();
    const int n = j.value("num_seeds", 10);
    for (int i = 0; i < n; ++i) cfg.seeds.push_back(seed + static_cast<std::uint64_t>(i));
  }
  cfg.permute_start = j.value("permute_start", true);
  cfg.calib_fraction = j.value("calib_fraction", 0.10);
  cfg.replay_capacity = j.value("replay_capacity", static_cast<std::size_t>(2000));
  cfg.threads = threads;

  const json jh = j.value("har", json::object());
  cfg.har = har_from_json(jh, static_cast<int>(cfg.synth.segments.size()));
  cfg.har_windows_per_class = jh.value("windows_per_class", 120);
  cfg.har_train.seed = jh.value("seed", static_cast<std::uint64_t>(99));
  cfg.har_train.max_epochs = jh.value("max_epochs", 200);
  return cfg;
}

MethodSpec method_from_json(const json& j, MethodKind kind) {
  MethodSpec m = default_method(kind);
  const json jt = j.value("trigger", json::object());
  m.trigger.tau = jt.value("tau", 0.75);
  m.trigger.tau_i = jt.value("tau_i", 0.95);
  m.trigger.rho = jt.value("rho", 0.75);
  m.trigger.consensus_window_s = jt.value("c", 4.0);
  m.trigger.vote_stride_s = jt.value("stride", 0.5);
  m.trigger.time_interval_s = jt.value("interval", 30.0);
  m.trigger.continuous_novelty = jt.value("continuous_novelty", false);
  const json jc = j.value("calibrator", json::object());
  m.calib.alpha = jc.value("alpha", 1.0);
  m.calib.replay_ratio = jc.value("replay_ratio", 0.7);
  m.calib.lr = jc.value("lr", 1e-3);
  m.calib.batch = jc.value("batch", 64);
  m.calib.max_epochs = jc.value("max_epochs", 200);
  return m;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Motion-aware continual gaze calibration workbench"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path, out_dir = "out", method_name = "macgaze_hybrid";
  std::uint64_t seed = 1;
  int threads = 1;
  app.add_option("--config", config_path, "JSON config file")->capture_default_str();
  app.add_option("--seed", seed, "base RNG seed")->capture_default_str();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--method", method_name, "method for `run`")->capture_default_str();
  app.add_option("--threads", threads, "parallel protocol workers")->capture_default_str();

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic session (JSONL)");
  std::string synth_format = "jsonl";
  synth_cmd->add_option("--format", synth_format, "jsonl or csv");

  auto* train_cmd = app.add_subcommand("train-har", "train the activity detector");
  auto* run_cmd = app.add_subcommand("run", "run one method through the protocol");
  auto* oneoff_cmd = app.add_subcommand("oneoff-matrix", "train x test one-off matrix");
  auto* ablate_cmd = app.add_subcommand("ablate", "component ablation runs");
  auto* sweep_cmd = app.add_subcommand("sweep-replay", "replay-ratio sweep");

  auto* report_cmd = app.add_subcommand("report", "recompute a summary from a frames log");
  std::string frames_csv;
  report_cmd->add_option("--frames", frames_csv, "frames CSV produced by `run`")->required();

  std::vector<double> ratios = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  sweep_cmd->add_option("--ratios", ratios, "replay ratios to sweep");

  CLI11_PARSE(app, argc, argv);
  const json cfg_json = load_json_config(config_path);

  if (synth_cmd->parsed()) {
    SynthConfig cfg = synth_from_json(cfg_json.value("synth", cfg_json), seed);
    const SessionStream s = generate_session(cfg);
    fs::create_directories(out_dir);
    const std::string ext = synth_format == "csv" ? ".csv" : ".jsonl";
    const auto path = (fs::path(out_dir) / ("session_" + std::to_string(seed) + ext)).string();
    save_session(s, path, synth_format);
    std::cout << "wrote " << path << " (" << s.frames.size() << " frames, "
              << s.meta.segments.size() << " segments)\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    ProtocolConfig cfg = protocol_from_json(cfg_json, seed, threads);
    HarModel model = train_protocol_har(cfg);
    fs::create_directories(out_dir);
    const auto path = (fs::path(out_dir) / "har_checkpoint.json").string();
    save_har_checkpoint(model, path);
    std::cout << "wrote " << path << "\n";
    return 0;
  }

  if (run_cmd->parsed()) {
    ProtocolConfig cfg = protocol_from_json(cfg_json, seed, threads);
    const MethodKind kind = method_from_string(method_name);
    const MethodSpec method = method_from_json(cfg_json, kind);
    const Report rep = run_protocol(method, cfg);
    write_report(rep, out_dir, method.label());
    write_report_metadata(out_dir, "run " + method.label(), seed, &rep);
    const auto avg = rep.cells.at(method.label()).at("average");
    std::cout << method.label() << ": mean error " << fmt_cm(avg.mean) << " cm over " << avg.n
              << " frames\n";
    return 0;
  }

  if (oneoff_cmd->parsed()) {
    ProtocolConfig cfg = protocol_from_json(cfg_json, seed, threads);
    const OneoffMatrix mx = run_oneoff_matrix(cfg);
    write_oneoff_matrix(mx, out_dir);
    write_report_metadata(out_dir, "oneoff-matrix", seed, nullptr);
    std::cout << "wrote one-off matrix for " << mx.motions.size() << " motions\n";
    return 0;
  }

  if (ablate_cmd->parsed()) {
    ProtocolConfig cfg = protocol_from_json(cfg_json, seed, threads);
    const AblationReport ab = run_ablations(cfg);
    write_ablation(ab, out_dir);
    write_report(ab.full, out_dir, "ablation_full", false, false);
    write_report_metadata(out_dir, "ablate", seed, &ab.full);
    std::cout << "ablation summary written to " << out_dir << "\n";
    return 0;
  }

  if (sweep_cmd->parsed()) {
    ProtocolConfig cfg = protocol_from_json(cfg_json, seed, threads);
    const ReplaySweep sw = sweep_replay(cfg, ratios);
    write_replay_sweep(sw, out_dir);
    write_report_metadata(out_dir, "sweep-replay", seed, nullptr);
    std::cout << "sweep written to " << out_dir << "\n";
    return 0;
  }

  if (report_cmd->parsed()) {
    fs::create_directories(out_dir);
    const auto out_path = (fs::path(out_dir) / "recomputed_summary.csv").string();
    summarize_frames_csv(frames_csv, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
