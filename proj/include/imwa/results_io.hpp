#pragma once

// Line-delimited structured results. The results file is byte-stable across
// reruns with the same seeds (no timestamps or timings in it); per-episode
// logs carry wall-clock and live in a separate file per run.

#include <string>
#include <vector>

#include "imwa/harness.hpp"

namespace imwa {

// One "run" record per result plus one "summary" record per arm.
void write_results(const std::string& path, const std::vector<ArmSpec>& arms,
                   const std::vector<RunResult>& results);

// Parses a results file back into its records (as serialized JSON lines).
// write_lines(read_lines(path)) reproduces the file byte-for-byte.
std::vector<std::string> read_result_lines(const std::string& path);

// Episode log for one run: episode index, averaged-model accuracy, each
// individual's accuracy, pairwise distances, wall seconds.
void write_episode_log(const std::string& path, const RunResult& result);

// Plot-ready series: one record per (x, y, std) triple.
struct SeriesPoint {
    double x = 0.0;
    double y = 0.0;
    double std = 0.0;
};
void append_series(const std::string& path, const std::string& series,
                   const std::string& label, const std::vector<SeriesPoint>& points);

// Series derived from episode records across seeds of one arm: mean accuracy
// of the averaged model per episode, and mean pairwise distance per episode.
std::vector<SeriesPoint> accuracy_series(const std::vector<RunResult>& results,
                                         const std::string& arm);
std::vector<SeriesPoint> distance_series(const std::vector<RunResult>& results,
                                         const std::string& arm);

void write_summary_table(const std::string& path, const SummaryTable& table);

}  // namespace imwa
