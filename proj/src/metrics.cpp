#include "grpolab/metrics.hpp"

#include <cstdlib>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace grpolab {

std::string format_double(double x) { return nlohmann::json(x).dump(); }

MetricsWriter::MetricsWriter(const std::string& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("metrics: cannot open " + path);
    out_ << kMetricsHeader << '\n';
    out_.flush();
}

void MetricsWriter::append(const MetricsRow& r) {
    out_ << r.step << ',' << format_double(r.mean_reward) << ','
         << format_double(r.accuracy_overall) << ',' << format_double(r.accuracy_easy) << ','
         << format_double(r.accuracy_hard) << ',' << format_double(r.mean_weight) << ','
         << format_double(r.resample_fraction) << ',' << format_double(r.format_rate) << ','
         << format_double(r.objective) << ',' << format_double(r.grad_norm) << '\n';
    out_.flush();
}

std::vector<MetricsRow> load_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("metrics: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("metrics: " + path + " is empty");
    if (line != kMetricsHeader)
        throw std::runtime_error("metrics: unexpected header in " + path);

    std::vector<MetricsRow> rows;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 10)
            throw std::runtime_error("metrics: line " + std::to_string(line_number) + " of " +
                                     path + " has " + std::to_string(fields.size()) +
                                     " fields, expected 10");
        auto num = [&](std::size_t i) {
            char* end = nullptr;
            const double v = std::strtod(fields[i].c_str(), &end);
            if (end == fields[i].c_str() || *end != '\0')
                throw std::runtime_error("metrics: line " + std::to_string(line_number) + " of " +
                                         path + ": bad number '" + fields[i] + "'");
            return v;
        };
        MetricsRow r;
        r.step = static_cast<std::size_t>(num(0));
        r.mean_reward = num(1);
        r.accuracy_overall = num(2);
        r.accuracy_easy = num(3);
        r.accuracy_hard = num(4);
        r.mean_weight = num(5);
        r.resample_fraction = num(6);
        r.format_rate = num(7);
        r.objective = num(8);
        r.grad_norm = num(9);
        rows.push_back(r);
    }
    return rows;
}

} // namespace grpolab
