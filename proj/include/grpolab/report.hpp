#pragma once

#include <string>
#include <vector>

#include "grpolab/metrics.hpp"

namespace grpolab {

struct ReportResult {
    std::vector<std::string> plot_paths;
    std::string summary_path;
};

// Reads one or more metrics CSV files and writes learning-curve SVG plots
// (reward, tier accuracies, mean difficulty weight, resample fraction) plus a
// plain-text summary. With several inputs the summary compares final per-tier
// accuracies against the first file. Header-only inputs produce a summary
// noting that no steps were recorded and no plots.
ReportResult write_report(const std::vector<std::string>& csv_paths, const std::string& out_dir);

} // namespace grpolab
