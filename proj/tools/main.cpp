#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grpolab/harness.hpp"
#include "grpolab/heatmap.hpp"
#include "grpolab/report.hpp"
#include "grpolab/rng.hpp"
#include "grpolab/taskgen.hpp"

namespace fs = std::filesystem;
using namespace grpolab;

namespace {

// Stable string hash (FNV-1a) so per-record seeds do not depend on the
// standard library.
std::uint64_t stable_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct GenTasksArgs {
    std::string input;
    std::string output;
    std::string knowledge_dir;
    std::string emit_prompts_dir;
    std::uint64_t seed = 1;
    bool demo = false;
};

void write_demo_inputs(const std::string& annotations_path, const std::string& knowledge_dir) {
    const std::vector<std::string> objects = {"bottle", "cable", "capsule", "metal nut", "screw"};
    const std::vector<std::string> defects = {"scratch", "dent", "crack", "hole", "stain"};
    const std::vector<std::string> regions = {"top left", "center", "bottom right",
                                              "middle left", "top center"};

    std::vector<AnnotationRecord> records;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const std::string& obj = objects[i];

        AnnotationRecord normal;
        normal.id = "demo-" + std::to_string(i) + "-normal";
        normal.object_type = obj;
        normal.is_anomalous = false;
        normal.query = {QueryRef::Kind::image, "images/" + obj + "_normal.png"};
        records.push_back(normal);

        AnnotationRecord defective;
        defective.id = "demo-" + std::to_string(i) + "-defect";
        defective.object_type = obj;
        defective.is_anomalous = true;
        defective.defect_type = defects[i % defects.size()];
        Mask m;
        m.h = 12;
        m.w = 16;
        m.bits.assign(m.h * m.w, 0);
        const std::size_t r0 = (i * 3) % 9, c0 = (i * 5) % 12;
        for (std::size_t r = r0; r < r0 + 3; ++r)
            for (std::size_t c = c0; c < c0 + 4; ++c) m.bits[r * m.w + c] = 1;
        defective.mask = m;
        defective.query = {QueryRef::Kind::image, "images/" + obj + "_defect.png"};
        records.push_back(defective);

        AnnotationRecord text;
        text.id = "demo-" + std::to_string(i) + "-text";
        text.object_type = obj;
        text.is_anomalous = true;
        text.defect_type = defects[(i + 1) % defects.size()];
        text.defect_location = regions[i % regions.size()];
        text.query = {QueryRef::Kind::text,
                      "A " + obj + " with a " + *text.defect_type + " near the " +
                          *text.defect_location + " of the image."};
        records.push_back(text);
    }
    save_annotations(records, annotations_path);

    fs::create_directories(knowledge_dir);
    for (const std::string& obj : objects) {
        std::ofstream out(fs::path(knowledge_dir) / (obj + ".txt"), std::ios::trunc);
        out << "A normal " << obj
            << " has a uniform surface with no scratches, dents, cracks, holes or stains. "
               "Any local deviation in texture or contour indicates a defect.\n";
    }
}

int cmd_gen_tasks(const GenTasksArgs& args) {
    if (!args.emit_prompts_dir.empty()) {
        write_prompt_assets(args.emit_prompts_dir);
        std::cout << "wrote prompt templates to " << args.emit_prompts_dir << "\n";
        if (args.input.empty() && !args.demo) return 0;
    }

    if (args.output.empty())
        throw std::runtime_error("gen-tasks: --out is required when generating samples");

    std::string input = args.input;
    std::string knowledge_dir = args.knowledge_dir;
    if (args.demo) {
        const fs::path base = fs::path(args.output).parent_path();
        fs::create_directories(base.empty() ? fs::path(".") : base);
        input = (base / "demo_annotations.jsonl").string();
        if (knowledge_dir.empty()) knowledge_dir = (base / "demo_knowledge").string();
        write_demo_inputs(input, knowledge_dir);
    }
    if (input.empty()) throw std::runtime_error("gen-tasks: provide --in or --demo");

    const std::vector<AnnotationRecord> records = load_annotations(input);
    KnowledgeBase knowledge;
    if (!knowledge_dir.empty()) knowledge = KnowledgeBase::from_directory(knowledge_dir);

    // distractor pools derived from the annotation set
    DistractorPools pools;
    for (const AnnotationRecord& r : records) {
        if (std::find(pools.object_types.begin(), pools.object_types.end(), r.object_type) ==
            pools.object_types.end())
            pools.object_types.push_back(r.object_type);
        if (r.defect_type) {
            auto& pool = pools.defects_by_object[r.object_type];
            if (std::find(pool.begin(), pool.end(), *r.defect_type) == pool.end())
                pool.push_back(*r.defect_type);
        }
    }
    // every object shares defect vocabulary across the set; pad thin pools so
    // classification questions stay constructible on small demo inputs
    std::vector<std::string> all_defects;
    for (const auto& [obj, pool] : pools.defects_by_object)
        for (const std::string& d : pool)
            if (std::find(all_defects.begin(), all_defects.end(), d) == all_defects.end())
                all_defects.push_back(d);
    for (auto& [obj, pool] : pools.defects_by_object)
        for (const std::string& d : all_defects)
            if (std::find(pool.begin(), pool.end(), d) == pool.end()) pool.push_back(d);

    std::vector<McqSample> samples;
    for (const AnnotationRecord& r : records) {
        Rng rng = make_rng(derive_seed(args.seed, stable_hash(r.id)));
        samples.push_back(build_question(r, TaskKind::anomaly_discrimination, pools, knowledge, rng));
        if (r.is_anomalous && r.defect_type)
            samples.push_back(
                build_question(r, TaskKind::defect_classification, pools, knowledge, rng));
        if (r.mask || (r.query.kind == QueryRef::Kind::text && r.defect_location))
            samples.push_back(
                build_question(r, TaskKind::defect_localization, pools, knowledge, rng));
        samples.push_back(
            build_question(r, TaskKind::object_classification, pools, knowledge, rng));
    }
    emit_samples(samples, args.output);
    std::cout << "wrote " << samples.size() << " samples from " << records.size()
              << " records to " << args.output << "\n";
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string mode_override;
    std::string out_dir_override;
    std::int64_t seed_override = -1;
};

int cmd_train(const TrainArgs& args) {
    ExperimentConfig cfg = load_experiment_config(args.config_path);
    if (!args.mode_override.empty()) {
        const auto m = run_mode_from_name(args.mode_override);
        if (!m) throw std::runtime_error("unknown mode '" + args.mode_override + "'");
        cfg.mode = *m;
    }
    if (!args.out_dir_override.empty()) cfg.out_dir = args.out_dir_override;
    if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
    validate_experiment_config(cfg);

    const RunResult res = run_experiment(cfg);
    std::cout << run_mode_name(cfg.mode) << " seed " << cfg.seed << ": accuracy overall "
              << format_double(res.final_eval.accuracy_overall) << " (easy "
              << format_double(res.final_eval.accuracy_easy) << ", hard "
              << format_double(res.final_eval.accuracy_hard) << "), format rate "
              << format_double(res.final_eval.format_rate) << ", robustness "
              << format_double(res.robustness) << "\n";
    std::cout << "metrics: " << res.metrics_path << "\n";
    return 0;
}

struct ReportArgs {
    std::vector<std::string> csv_paths;
    std::string out_dir;
};

int cmd_report(const ReportArgs& args) {
    const ReportResult res = write_report(args.csv_paths, args.out_dir);
    std::cout << "summary: " << res.summary_path << "\n";
    for (const std::string& p : res.plot_paths) std::cout << "plot: " << p << "\n";
    return 0;
}

struct HeatmapBenchArgs {
    std::string out_dir = "heatmap-bench";
    std::uint64_t seed = 1;
    std::size_t fixtures = 100;
    std::size_t m = 16, n = 16, d = 8, k = 1;
    std::vector<std::string> query_grids;  // externally dumped per-layer grids
    std::vector<std::string> ref_grids;
};

// Aggregated heatmap over externally dumped feature-grid files.
int cmd_heatmap_import(const HeatmapBenchArgs& args) {
    if (args.query_grids.size() != args.ref_grids.size())
        throw std::runtime_error("heatmap-bench: need one --ref-grid per --query-grid");
    std::vector<Heatmap> maps;
    for (std::size_t i = 0; i < args.query_grids.size(); ++i) {
        const FeatureGrid q = load_feature_grid(args.query_grids[i]);
        const FeatureGrid r = load_feature_grid(args.ref_grids[i]);
        maps.push_back(layer_heatmap(q, r, args.k));
    }
    const Heatmap agg = aggregate(maps);
    fs::create_directories(args.out_dir);
    heatmap_to_csv(agg, (fs::path(args.out_dir) / "heatmap.csv").string());
    heatmap_to_pgm(agg, (fs::path(args.out_dir) / "heatmap.pgm").string());
    std::cout << "wrote aggregated " << agg.m << "x" << agg.n << " heatmap over " << maps.size()
              << " layer(s) to " << args.out_dir << "\n";
    return 0;
}

int cmd_heatmap_bench(const HeatmapBenchArgs& args) {
    if (!args.query_grids.empty() || !args.ref_grids.empty()) return cmd_heatmap_import(args);
    fs::create_directories(args.out_dir);
    std::ofstream csv(fs::path(args.out_dir) / "bench.csv", std::ios::binary | std::ios::trunc);
    csv << "fixture,defect_i0,defect_j0,argmax_i,argmax_j,max_heat,hit\n";

    std::size_t hits = 0;
    Heatmap example;
    for (std::size_t f = 0; f < args.fixtures; ++f) {
        Rng rng = make_rng(derive_seed(args.seed, f));
        SynthSpec spec;
        spec.m = args.m;
        spec.n = args.n;
        spec.d = args.d;
        spec.layers = 3;
        DefectRect rect;
        rect.h = 2 + rand_below(rng, 2);
        rect.w = 2 + rand_below(rng, 2);
        rect.i0 = rand_below(rng, spec.m - rect.h);
        rect.j0 = rand_below(rng, spec.n - rect.w);
        spec.defect = rect;

        const std::vector<SynthPair> layers = synth_features(spec, rng);
        std::vector<Heatmap> maps;
        for (const SynthPair& p : layers) maps.push_back(layer_heatmap(p.query, p.reference, args.k));
        const Heatmap agg = aggregate(maps);

        std::size_t bi = 0, bj = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < agg.m; ++i)
            for (std::size_t j = 0; j < agg.n; ++j)
                if (agg.at(i, j) > best) {
                    best = agg.at(i, j);
                    bi = i;
                    bj = j;
                }
        const bool hit = rect.contains(bi, bj);
        if (hit) ++hits;
        csv << f << ',' << rect.i0 << ',' << rect.j0 << ',' << bi << ',' << bj << ','
            << format_double(best) << ',' << (hit ? 1 : 0) << '\n';
        if (f == 0) example = agg;
    }

    heatmap_to_csv(example, (fs::path(args.out_dir) / "heatmap_example.csv").string());
    heatmap_to_pgm(example, (fs::path(args.out_dir) / "heatmap_example.pgm").string());

    nlohmann::json summary;
    summary["fixtures"] = args.fixtures;
    summary["hits"] = hits;
    summary["hit_rate"] = static_cast<double>(hits) / static_cast<double>(args.fixtures);
    std::ofstream out(fs::path(args.out_dir) / "summary.json", std::ios::binary | std::ios::trunc);
    out << summary.dump(2) << '\n';

    std::cout << "heatmap bench: " << hits << "/" << args.fixtures << " planted defects located\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale difficulty-aware GRPO laboratory"};
    app.require_subcommand(1);

    GenTasksArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-tasks",
                                       "convert annotation records into multiple-choice samples");
    gen->add_option("--in", gen_args.input, "annotation records (JSON Lines)");
    gen->add_option("--out", gen_args.output,
                    "output samples path (JSON Lines); required unless only emitting prompts");
    gen->add_option("--knowledge-dir", gen_args.knowledge_dir,
                    "directory with one <object_type>.txt knowledge file per object");
    gen->add_option("--emit-prompts", gen_args.emit_prompts_dir,
                    "also write the four prompt template assets into this directory");
    gen->add_option("--seed", gen_args.seed, "master seed");
    gen->add_flag("--demo", gen_args.demo, "generate built-in demo annotations first");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "run one seeded training experiment");
    train->add_option("--config", train_args.config_path, "experiment config (JSON)")->required();
    train->add_option("--mode", train_args.mode_override,
                      "override mode: sft | grpo_plain | grpo_difficulty_aware");
    train->add_option("--out-dir", train_args.out_dir_override, "override output directory");
    train->add_option("--seed", train_args.seed_override, "override master seed");

    ReportArgs report_args;
    CLI::App* report = app.add_subcommand("report", "plots and summary from metrics CSV files");
    report->add_option("--csv", report_args.csv_paths, "metrics CSV (repeatable)")->required();
    report->add_option("--out-dir", report_args.out_dir, "output directory")->required();

    HeatmapBenchArgs bench_args;
    CLI::App* bench = app.add_subcommand("heatmap-bench",
                                         "locate planted defects on synthetic feature grids");
    bench->add_option("--out-dir", bench_args.out_dir, "output directory");
    bench->add_option("--seed", bench_args.seed, "master seed");
    bench->add_option("--fixtures", bench_args.fixtures, "number of seeded fixtures");
    bench->add_option("--m", bench_args.m, "grid height");
    bench->add_option("--n", bench_args.n, "grid width");
    bench->add_option("--d", bench_args.d, "feature dimension");
    bench->add_option("--k", bench_args.k, "window radius");
    bench->add_option("--query-grid", bench_args.query_grids,
                      "externally dumped query feature grid (repeatable, one per layer)");
    bench->add_option("--ref-grid", bench_args.ref_grids,
                      "reference feature grid paired with --query-grid");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_tasks(gen_args);
        if (train->parsed()) return cmd_train(train_args);
        if (report->parsed()) return cmd_report(report_args);
        if (bench->parsed()) return cmd_heatmap_bench(bench_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
