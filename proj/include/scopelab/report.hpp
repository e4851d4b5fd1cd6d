#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scopelab/trainer.hpp"

namespace scopelab {

struct ExperimentArm {
    std::string label;
    TrainConfig config;  // its seed is replaced by each entry of the seed list
};

struct ExperimentSpec {
    std::vector<ExperimentArm> arms;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out;
    std::size_t jobs = 1;  // runs executed concurrently

    /// Throws std::invalid_argument on duplicate labels or seeds, or fewer than two arms.
    void validate() const;
};

/// Metrics of every (arm, seed) run, indexed [arm][seed].
using MetricsGrid = std::vector<std::vector<std::vector<MetricsRow>>>;

/// One row per update: `<label>_<metric>_mean` for every metric column, plus
/// `<label>_<metric>_std` (population, across seeds) when there are two or more seeds.
std::string merged_metrics_csv(const std::vector<std::string>& labels, const MetricsGrid& grid);

/// Static SVG line chart of `metric` drawn from a CSV with an `update`
/// column. Series are the column named `metric` (a plain metrics.csv) or every
/// `<label>_<metric>_mean` column, with a +-std band when the matching `_std`
/// column exists. Depends only on the CSV text.
std::string render_chart_svg(const std::string& csv_text, const std::string& metric);

/// Metrics charted by compare.
extern const std::vector<std::string> kChartMetrics;

struct ComparisonReport {
    std::vector<std::string> labels;
    std::vector<std::vector<RunSummary>> summaries;  // [arm][seed]
    MetricsGrid metrics;
    std::string merged_csv;
};

/// Runs every (arm, seed) into out/<label>/seed-<seed>/, then writes
/// out/merged_metrics.csv, out/<metric>.svg and out/summary.json.
ComparisonReport compare(const ExperimentSpec& spec);

}  // namespace scopelab
