#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hop3d/trainer.hpp"

namespace hop3d {

nlohmann::json report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

double median(std::vector<double> values);  // throws on empty input

// Seeded percentile bootstrap (2.5/97.5) of the median; a single sample
// collapses to the point itself.
std::pair<double, double> bootstrap_ci_median(const std::vector<double>& values,
                                              std::uint64_t seed, int resamples = 1000);

// One JSON object per line; the reader rejects files written by anything else.
void write_runs_jsonl(const std::vector<AblationRun>& runs, const std::string& path);
std::vector<AblationRun> read_runs_jsonl(const std::string& path);

// Aggregated CSVs (summary.csv, confidence_hist.csv, class_frequency.csv)
// grouped by cell id, medians with bootstrap intervals.
void write_report_csvs(const std::vector<AblationRun>& runs, const std::string& dir);

}  // namespace hop3d
