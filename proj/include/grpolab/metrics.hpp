#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace grpolab {

// One row per optimization step. Column order is fixed and mirrored by
// kMetricsHeader; README documents the semantics.
struct MetricsRow {
    std::size_t step = 0;
    double mean_reward = 0.0;
    double accuracy_overall = 0.0;
    double accuracy_easy = 0.0;
    double accuracy_hard = 0.0;
    double mean_weight = 1.0;
    double resample_fraction = 0.0;
    double format_rate = 0.0;
    double objective = 0.0;
    double grad_norm = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,mean_reward,accuracy_overall,accuracy_easy,accuracy_hard,mean_weight,"
    "resample_fraction,format_rate,objective,grad_norm";

// Shortest round-trip decimal representation (same as JSON serialization),
// so CSV readers recover the exact double.
std::string format_double(double x);

class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path);
    void append(const MetricsRow& row);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

// Throws std::runtime_error naming the offending line on malformed input.
std::vector<MetricsRow> load_metrics_csv(const std::string& path);

} // namespace grpolab
