#pragma once

#include <string>

#include "macgaze/protocol.hpp"

namespace macgaze {

/// Fixed-notation float used everywhere in report CSVs so identical runs
/// emit byte-identical files.
std::string fmt_cm(double v);

/// Writes <prefix>_summary.csv, <prefix>_trajectory.csv,
/// <prefix>_triggers.csv, <prefix>_frames.csv and
/// <prefix>_decisions.jsonl under out_dir.
void write_report(const Report& report, const std::string& out_dir, const std::string& prefix,
                  bool emit_frames = true, bool emit_decisions = true);

void write_oneoff_matrix(const OneoffMatrix& mx, const std::string& out_dir);
void write_replay_sweep(const ReplaySweep& sw, const std::string& out_dir);
void write_ablation(const AblationReport& ab, const std::string& out_dir);

/// report.json: run metadata plus the published reference values the
/// desk-scale runs are compared against qualitatively (never asserted).
void write_report_metadata(const std::string& out_dir, const std::string& command,
                           std::uint64_t seed, const Report* report);

/// Rebuild a summary CSV from a frames CSV written by write_report;
/// recomputed cells must match the original summary byte for byte.
void summarize_frames_csv(const std::string& frames_csv, const std::string& out_summary_csv);

}  // namespace macgaze
