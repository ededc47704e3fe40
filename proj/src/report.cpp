#include "grpolab/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace grpolab {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c",
                                                 "#9467bd", "#ff7f0e", "#8c564b"};

struct Series {
    std::string label;
    std::string color;
    bool dashed = false;
    std::vector<std::pair<double, double>> points;  // (step, value)
};

std::string fmt2(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return buf;
}

std::string svg_line_chart(const std::string& title, const std::vector<Series>& series) {
    const double width = 720, height = 420;
    const double ml = 60, mr = 20, mt = 40, mb = 40;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Series& s : series) {
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(width) + "\" height=\"" +
           fmt2(height) + "\" viewBox=\"0 0 " + fmt2(width) + " " + fmt2(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt2(width / 2) + "\" y=\"20\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" + title + "</text>\n";
    // axes
    svg += "<line x1=\"" + fmt2(ml) + "\" y1=\"" + fmt2(mt) + "\" x2=\"" + fmt2(ml) + "\" y2=\"" +
           fmt2(mt + ph) + "\" stroke=\"#444\"/>\n";
    svg += "<line x1=\"" + fmt2(ml) + "\" y1=\"" + fmt2(mt + ph) + "\" x2=\"" + fmt2(ml + pw) +
           "\" y2=\"" + fmt2(mt + ph) + "\" stroke=\"#444\"/>\n";
    // y ticks
    for (int i = 0; i <= 4; ++i) {
        const double v = ymin + (ymax - ymin) * i / 4.0;
        const double y = py(v);
        svg += "<line x1=\"" + fmt2(ml - 4) + "\" y1=\"" + fmt2(y) + "\" x2=\"" + fmt2(ml) +
               "\" y2=\"" + fmt2(y) + "\" stroke=\"#444\"/>\n";
        svg += "<text x=\"" + fmt2(ml - 8) + "\" y=\"" + fmt2(y + 4) + "\" text-anchor=\"end\" "
               "font-family=\"sans-serif\" font-size=\"11\">" + fmt2(v) + "</text>\n";
    }
    // x ticks
    for (int i = 0; i <= 4; ++i) {
        const double v = xmin + (xmax - xmin) * i / 4.0;
        const double x = px(v);
        svg += "<line x1=\"" + fmt2(x) + "\" y1=\"" + fmt2(mt + ph) + "\" x2=\"" + fmt2(x) +
               "\" y2=\"" + fmt2(mt + ph + 4) + "\" stroke=\"#444\"/>\n";
        svg += "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(mt + ph + 16) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt2(v) +
               "</text>\n";
    }
    // series
    for (const Series& s : series) {
        if (s.points.empty()) continue;
        svg += "<polyline fill=\"none\" stroke=\"" + s.color + "\"";
        if (s.dashed) svg += " stroke-dasharray=\"6 3\"";
        svg += " stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : s.points) svg += fmt2(px(x)) + "," + fmt2(py(y)) + " ";
        svg += "\"/>\n";
    }
    // legend
    double ly = mt + 4;
    for (const Series& s : series) {
        svg += "<line x1=\"" + fmt2(ml + pw - 170) + "\" y1=\"" + fmt2(ly) + "\" x2=\"" +
               fmt2(ml + pw - 150) + "\" y2=\"" + fmt2(ly) + "\" stroke=\"" + s.color + "\"";
        if (s.dashed) svg += " stroke-dasharray=\"6 3\"";
        svg += " stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + fmt2(ml + pw - 144) + "\" y=\"" + fmt2(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
        ly += 16;
    }
    svg += "</svg>\n";
    return svg;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot open " + path);
    out << content;
}

} // namespace

ReportResult write_report(const std::vector<std::string>& csv_paths, const std::string& out_dir) {
    if (csv_paths.empty()) throw std::invalid_argument("write_report: no csv inputs");
    fs::create_directories(out_dir);

    struct Input {
        std::string label;
        std::vector<MetricsRow> rows;
    };
    std::vector<Input> inputs;
    for (const std::string& p : csv_paths) {
        const fs::path fp(p);
        std::string label = fp.stem().string();
        // every run writes "metrics.csv"; the run directory tells them apart
        if (label == "metrics" && fp.has_parent_path() && fp.parent_path().has_filename())
            label = fp.parent_path().filename().string();
        inputs.push_back({label, load_metrics_csv(p)});
    }

    ReportResult result;

    // summary text
    std::string summary;
    summary += "run summary\n===========\n\n";
    for (const Input& in : inputs) {
        summary += in.label + ":\n";
        if (in.rows.empty()) {
            summary += "  no steps recorded\n\n";
            continue;
        }
        const MetricsRow& last = in.rows.back();
        summary += "  steps logged: " + std::to_string(in.rows.size()) + "\n";
        summary += "  final step " + std::to_string(last.step) + ": mean reward " +
                   format_double(last.mean_reward) + ", accuracy overall " +
                   format_double(last.accuracy_overall) + " (easy " +
                   format_double(last.accuracy_easy) + ", hard " +
                   format_double(last.accuracy_hard) + ")\n";
        summary += "  format rate " + format_double(last.format_rate) + ", mean weight " +
                   format_double(last.mean_weight) + ", resample fraction " +
                   format_double(last.resample_fraction) + "\n\n";
    }
    if (inputs.size() >= 2 && !inputs.front().rows.empty()) {
        const MetricsRow& base = inputs.front().rows.back();
        for (std::size_t i = 1; i < inputs.size(); ++i) {
            if (inputs[i].rows.empty()) continue;
            const MetricsRow& other = inputs[i].rows.back();
            summary += "final accuracy delta (" + inputs[i].label + " - " +
                       inputs.front().label + "): easy " +
                       format_double(other.accuracy_easy - base.accuracy_easy) + ", hard " +
                       format_double(other.accuracy_hard - base.accuracy_hard) + "\n";
        }
    }
    result.summary_path = (fs::path(out_dir) / "summary.txt").string();
    write_text(result.summary_path, summary);

    const bool any_rows =
        std::any_of(inputs.begin(), inputs.end(), [](const Input& i) { return !i.rows.empty(); });
    if (!any_rows) return result;

    struct PlotSpec {
        const char* file;
        const char* title;
        std::function<std::vector<Series>(void)> build;
    };

    auto single_metric = [&](double MetricsRow::* field) {
        std::vector<Series> out;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            Series s;
            s.label = inputs[i].label;
            s.color = kPalette[i % kPalette.size()];
            for (const MetricsRow& r : inputs[i].rows)
                s.points.emplace_back(static_cast<double>(r.step), r.*field);
            out.push_back(std::move(s));
        }
        return out;
    };

    const std::vector<PlotSpec> plots = {
        {"reward.svg", "mean total reward",
         [&] { return single_metric(&MetricsRow::mean_reward); }},
        {"tier_accuracy.svg", "per-tier accuracy",
         [&] {
             std::vector<Series> out;
             for (std::size_t i = 0; i < inputs.size(); ++i) {
                 Series easy;
                 easy.label = inputs[i].label + " easy";
                 easy.color = kPalette[i % kPalette.size()];
                 Series hard;
                 hard.label = inputs[i].label + " hard";
                 hard.color = kPalette[i % kPalette.size()];
                 hard.dashed = true;
                 for (const MetricsRow& r : inputs[i].rows) {
                     easy.points.emplace_back(static_cast<double>(r.step), r.accuracy_easy);
                     hard.points.emplace_back(static_cast<double>(r.step), r.accuracy_hard);
                 }
                 out.push_back(std::move(easy));
                 out.push_back(std::move(hard));
             }
             return out;
         }},
        {"mean_weight.svg", "mean difficulty weight",
         [&] { return single_metric(&MetricsRow::mean_weight); }},
        {"resample_fraction.svg", "resample fraction",
         [&] { return single_metric(&MetricsRow::resample_fraction); }},
    };

    for (const PlotSpec& p : plots) {
        const std::string path = (fs::path(out_dir) / p.file).string();
        write_text(path, svg_line_chart(p.title, p.build()));
        result.plot_paths.push_back(path);
    }
    return result;
}

} // namespace grpolab
