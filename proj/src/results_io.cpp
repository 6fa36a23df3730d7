#include "imwa/results_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "imwa/errors.hpp"

namespace imwa {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string hex_u64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ordered_json report_json(const EvalReport& report) {
    ordered_json j;
    j["top1"] = report.top1;
    ordered_json per_class = ordered_json::array();
    for (const auto& v : report.per_class) {
        if (v.has_value()) {
            per_class.push_back(*v);
        } else {
            per_class.push_back(nullptr);
        }
    }
    j["per_class"] = std::move(per_class);
    j["many"] = report.many_acc;
    j["medium"] = report.medium_acc;
    j["few"] = report.few_acc;
    j["confusion"] = report.confusion;
    return j;
}

}  // namespace

void write_results(const std::string& path, const std::vector<ArmSpec>& arms,
                   const std::vector<RunResult>& results) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError(path + ": cannot open for writing");
    }
    for (const auto& rr : results) {
        ordered_json j;
        j["type"] = "run";
        j["arm"] = rr.arm;
        j["seed"] = rr.seed;
        if (rr.ok()) {
            j["report"] = report_json(rr.final_report);
            j["episodes"] = rr.records.size();
            j["total_trained_iterations"] = rr.total_trained_iterations;
            j["peak_model_copies"] = rr.peak_model_copies;
            j["init_hash"] = hex_u64(rr.init_hash);
            j["final_hash"] = hex_u64(weight_hash(rr.final_ema.has_value() ? *rr.final_ema
                                                                           : rr.final_student));
        } else {
            j["error"] = rr.error;
        }
        out << j.dump() << '\n';
    }
    for (const auto& p : summarize(arms, results)) {
        ordered_json j;
        j["type"] = "summary";
        j["arm"] = p.label;
        j["runs"] = p.runs;
        j["top1_mean"] = p.mean_top1;
        j["top1_std"] = p.std_top1;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw FormatError(path + ": write failed");
    }
}

std::vector<std::string> read_result_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path + ": cannot open");
    }
    std::vector<std::string> lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const ordered_json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        lines.push_back(j.dump());
    }
    return lines;
}

void write_episode_log(const std::string& path, const RunResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError(path + ": cannot open for writing");
    }
    for (const auto& rec : result.records) {
        ordered_json j;
        j["episode"] = rec.episode;
        j["top1_avg"] = rec.averaged_top1;
        if (rec.averaged_ema_top1.has_value()) {
            j["top1_avg_ema"] = *rec.averaged_ema_top1;
        }
        j["top1_individual"] = rec.individual_top1;
        j["l2_pairwise"] = rec.pairwise_distance;
        j["wall_seconds"] = rec.wall_seconds;
        out << j.dump() << '\n';
    }
}

void append_series(const std::string& path, const std::string& series,
                   const std::string& label, const std::vector<SeriesPoint>& points) {
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw FormatError(path + ": cannot open for writing");
    }
    for (const auto& p : points) {
        ordered_json j;
        j["type"] = "series";
        j["series"] = series;
        j["label"] = label;
        j["x"] = p.x;
        j["y"] = p.y;
        j["std"] = p.std;
        out << j.dump() << '\n';
    }
}

namespace {

std::vector<SeriesPoint> episode_series(const std::vector<RunResult>& results,
                                        const std::string& arm, bool distances) {
    std::size_t episodes = 0;
    for (const auto& rr : results) {
        if (rr.arm == arm && rr.ok()) {
            episodes = std::max(episodes, rr.records.size());
        }
    }
    std::vector<SeriesPoint> points;
    points.reserve(episodes);
    for (std::size_t e = 0; e < episodes; ++e) {
        std::vector<double> ys;
        for (const auto& rr : results) {
            if (rr.arm != arm || !rr.ok() || e >= rr.records.size()) {
                continue;
            }
            const auto& rec = rr.records[e];
            if (distances) {
                if (!rec.pairwise_distance.empty()) {
                    double sum = 0.0;
                    for (const double d : rec.pairwise_distance) {
                        sum += d;
                    }
                    ys.push_back(sum / static_cast<double>(rec.pairwise_distance.size()));
                }
            } else {
                ys.push_back(rec.averaged_top1);
            }
        }
        if (ys.empty()) {
            continue;
        }
        double mean = 0.0;
        for (const double y : ys) {
            mean += y;
        }
        mean /= static_cast<double>(ys.size());
        double var = 0.0;
        for (const double y : ys) {
            var += (y - mean) * (y - mean);
        }
        const double sd = ys.size() > 1 ? std::sqrt(var / static_cast<double>(ys.size() - 1))
                                        : 0.0;
        points.push_back({static_cast<double>(e + 1), mean, sd});
    }
    return points;
}

}  // namespace

std::vector<SeriesPoint> accuracy_series(const std::vector<RunResult>& results,
                                         const std::string& arm) {
    return episode_series(results, arm, false);
}

std::vector<SeriesPoint> distance_series(const std::vector<RunResult>& results,
                                         const std::string& arm) {
    return episode_series(results, arm, true);
}

void write_summary_table(const std::string& path, const SummaryTable& table) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError(path + ": cannot open for writing");
    }
    out << format_table(table);
}

}  // namespace imwa
