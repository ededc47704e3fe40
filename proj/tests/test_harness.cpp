#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "grpolab/harness.hpp"
#include "grpolab/report.hpp"
#include "test_util.hpp"

using namespace grpolab;

namespace {

ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.mode = RunMode::grpo_difficulty_aware;
    cfg.synthetic = {6, 6, 0.9, 0.05, 4};
    cfg.policy.t_max = 16;
    cfg.grpo.group_size = 8;
    cfg.grpo.lr = 10.0;
    cfg.steps = 12;
    cfg.eval_every = 4;
    cfg.batch_questions = 4;
    cfg.eval_group_size = 16;
    cfg.seed = 3;
    cfg.out_dir = out_dir;
    return cfg;
}

} // namespace

TEST_CASE("synthetic task set has the requested tier layout") {
    Rng rng = make_rng(1);
    const SyntheticSpec spec{50, 50, 0.9, 0.05, 4};
    const auto samples = make_synthetic_tasks(spec, rng);
    REQUIRE(samples.size() == 100);
    std::size_t easy = 0, hard = 0;
    for (const McqSample& s : samples) {
        REQUIRE(s.provenance.difficulty.has_value());
        (*s.provenance.difficulty == "easy" ? easy : hard) += 1;
        CHECK(s.options.size() == 4);
        CHECK(s.gold_index < 4);
    }
    CHECK(easy == 50);
    CHECK(hard == 50);

    Rng rng2 = make_rng(1);
    const auto again = make_synthetic_tasks(spec, rng2);
    CHECK(again == samples);
}

TEST_CASE("initializer hits the configured tier priors") {
    const SyntheticSpec spec{10, 10, 0.9, 0.05, 4};
    Rng rng = make_rng(42);
    const auto samples = make_synthetic_tasks(spec, rng);
    const Vocabulary vocab = make_vocabulary(9, 4);
    PolicyInitConfig pc;
    pc.t_max = 16;
    const PolicyParams params = init_policy_for_tasks(samples, vocab, pc, spec);
    const RewardScorer scorer(vocab);

    // ~1000 rollouts per tier
    Rng eval_rng = make_rng(7);
    const EvalStats st = evaluate_policy(params, vocab, samples, scorer, 100, eval_rng);
    CHECK(std::abs(st.accuracy_easy - 0.9) < 0.05);
    CHECK(std::abs(st.accuracy_hard - 0.05) < 0.05);

    // hard tier: a group of 8 misses the gold answer more often than not
    GrpoConfig gcfg;
    gcfg.group_size = 8;
    gcfg.max_resample_rounds = 4;
    std::size_t resampled = 0, trials = 0;
    for (std::size_t q = spec.easy; q < samples.size(); ++q) {
        for (int rep = 0; rep < 20; ++rep) {
            Rng roll = make_rng(derive_seed(100 + q, static_cast<std::uint64_t>(rep)));
            const GroupSampler sampler =
                default_group_sampler(params, vocab, q, gcfg.group_size, roll);
            const GroupBatch b = rollout_with_resampling(samples[q], q, sampler, scorer, gcfg);
            ++trials;
            if (b.resample_rounds > 0) ++resampled;
        }
    }
    CHECK(static_cast<double>(resampled) / static_cast<double>(trials) > 0.5);
}

TEST_CASE("experiment config round-trips through json") {
    const std::string dir = testutil::tmp_dir("harness_cfg");
    ExperimentConfig cfg = tiny_config(dir + "/run");
    cfg.grpo.beta = 0.02;
    cfg.reward_weights.w_cls = 4.0;
    cfg.heldout_think_lengths = {0, 2};
    save_experiment_config(cfg, dir + "/cfg.json");
    const ExperimentConfig back = load_experiment_config(dir + "/cfg.json");
    CHECK(back.mode == cfg.mode);
    CHECK(back.synthetic.easy == cfg.synthetic.easy);
    CHECK(back.synthetic.hard_prior == cfg.synthetic.hard_prior);
    CHECK(back.grpo.beta == cfg.grpo.beta);
    CHECK(back.reward_weights.w_cls == cfg.reward_weights.w_cls);
    CHECK(back.heldout_think_lengths == cfg.heldout_think_lengths);
    CHECK(back.seed == cfg.seed);

    SUBCASE("invalid configs are rejected") {
        ExperimentConfig bad = cfg;
        bad.steps = 0;
        CHECK_THROWS(validate_experiment_config(bad));
        bad = cfg;
        bad.synthetic.easy_prior = bad.synthetic.hard_prior;
        CHECK_THROWS(validate_experiment_config(bad));
        bad = cfg;
        bad.schema_version = 2;
        CHECK_THROWS(validate_experiment_config(bad));
        bad = cfg;
        bad.synthetic.hard_prior = 0.0;
        CHECK_THROWS(validate_experiment_config(bad));
    }
}

TEST_CASE("metrics csv round-trips and reports malformed lines") {
    const std::string dir = testutil::tmp_dir("harness_metrics");
    const std::string path = dir + "/m.csv";
    {
        MetricsWriter w(path);
        MetricsRow r;
        r.step = 3;
        r.mean_reward = 1.25;
        r.accuracy_overall = 0.5;
        r.accuracy_easy = 0.625;
        r.accuracy_hard = 0.375;
        r.mean_weight = 1.5;
        r.resample_fraction = 0.25;
        r.format_rate = 0.875;
        r.objective = -0.125;
        r.grad_norm = 2.5;
        w.append(r);
    }
    const auto rows = load_metrics_csv(path);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].step == 3);
    CHECK(rows[0].mean_reward == 1.25);
    CHECK(rows[0].accuracy_hard == 0.375);
    CHECK(rows[0].grad_norm == 2.5);

    std::ofstream out(path, std::ios::app);
    out << "4,not_a_number,0,0,0,1,0,1,0,0\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_metrics_csv(path),
                         doctest::Contains("line 3"), std::runtime_error);
}

TEST_CASE("sft with zero learning rate logs constant metrics") {
    const std::string dir = testutil::tmp_dir("harness_sft0");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.mode = RunMode::sft;
    cfg.grpo.lr = 0.0;
    cfg.steps = 8;
    cfg.eval_every = 2;
    run_sft(cfg);
    const auto rows = load_metrics_csv(dir + "/metrics.csv");
    REQUIRE(rows.size() == 4);
    for (const MetricsRow& r : rows) {
        CHECK(r.mean_reward == rows[0].mean_reward);
        CHECK(r.accuracy_overall == rows[0].accuracy_overall);
        CHECK(r.objective == rows[0].objective);
        CHECK(r.grad_norm == rows[0].grad_norm);
    }
}

TEST_CASE("sft converges to the gold template on a small task set") {
    const std::string dir = testutil::tmp_dir("harness_sft_conv");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.mode = RunMode::sft;
    cfg.synthetic = {5, 5, 0.9, 0.05, 4};
    cfg.grpo.lr = 200.0;
    cfg.steps = 800;
    cfg.eval_every = 200;
    cfg.eval_group_size = 32;
    const RunResult res = run_sft(cfg);
    CHECK(res.final_eval.accuracy_overall >= 0.99);
    CHECK(res.final_eval.format_rate >= 0.99);
    CHECK(std::filesystem::exists(res.checkpoint_path));
    CHECK(std::filesystem::exists(res.summary_path));
}

TEST_CASE("grpo_plain logs weight exactly 1 and resample fraction exactly 0") {
    const std::string dir = testutil::tmp_dir("harness_plain");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.mode = RunMode::grpo_plain;
    run_grpo(cfg);
    const auto rows = load_metrics_csv(dir + "/metrics.csv");
    REQUIRE(rows.size() == cfg.steps);
    for (const MetricsRow& r : rows) {
        CHECK(r.mean_weight == 1.0);
        CHECK(r.resample_fraction == 0.0);
    }
}

TEST_CASE("difficulty-aware mode keeps the logged weight inside [1, 2]") {
    const std::string dir = testutil::tmp_dir("harness_da");
    ExperimentConfig cfg = tiny_config(dir);
    run_grpo(cfg);
    const auto rows = load_metrics_csv(dir + "/metrics.csv");
    REQUIRE(rows.size() == cfg.steps);
    bool saw_weight_above_one = false;
    for (const MetricsRow& r : rows) {
        CHECK(r.mean_weight >= 1.0);
        CHECK(r.mean_weight <= 2.0);
        if (r.mean_weight > 1.0) saw_weight_above_one = true;
        CHECK(r.accuracy_easy >= 0.0);
        CHECK(r.accuracy_easy <= 1.0);
        CHECK(r.accuracy_hard >= 0.0);
        CHECK(r.accuracy_hard <= 1.0);
        CHECK(std::isfinite(r.objective));
        CHECK(std::isfinite(r.grad_norm));
    }
    CHECK(saw_weight_above_one);  // the hard tier leaves a trace
}

TEST_CASE("training runs are byte-reproducible for a fixed seed") {
    for (RunMode mode : {RunMode::sft, RunMode::grpo_plain, RunMode::grpo_difficulty_aware}) {
        const std::string d1 = testutil::tmp_dir("harness_det_a");
        const std::string d2 = testutil::tmp_dir("harness_det_b");
        ExperimentConfig c1 = tiny_config(d1);
        c1.mode = mode;
        c1.steps = 6;
        ExperimentConfig c2 = c1;
        c2.out_dir = d2;
        run_experiment(c1);
        run_experiment(c2);
        CHECK(testutil::slurp(d1 + "/metrics.csv") == testutil::slurp(d2 + "/metrics.csv"));
        CHECK(testutil::slurp(d1 + "/checkpoint.bin") == testutil::slurp(d2 + "/checkpoint.bin"));
        CHECK(testutil::slurp(d1 + "/summary.json") == testutil::slurp(d2 + "/summary.json"));
    }
}

TEST_CASE("format robustness reads the exact answer-slot probabilities") {
    const SyntheticSpec spec{4, 4, 0.9, 0.05, 4};
    Rng rng = make_rng(11);
    const auto samples = make_synthetic_tasks(spec, rng);
    const Vocabulary vocab = make_vocabulary(9, 4);
    PolicyInitConfig pc;
    pc.t_max = 16;
    const PolicyParams params = init_policy_for_tasks(samples, vocab, pc, spec);
    const double r = format_robustness(params, vocab, samples, {0, 1, 3, 4});
    // mean of the tier priors, up to the tiny leak onto non-letter tokens
    CHECK(r == doctest::Approx(0.475).epsilon(0.02));
}

TEST_CASE("report writes plots and a comparison summary") {
    const std::string dir = testutil::tmp_dir("harness_report");
    ExperimentConfig a = tiny_config(dir + "/a");
    a.steps = 5;
    ExperimentConfig b = tiny_config(dir + "/b");
    b.mode = RunMode::grpo_plain;
    b.steps = 5;
    run_experiment(a);
    run_experiment(b);

    const ReportResult res =
        write_report({dir + "/a/metrics.csv", dir + "/b/metrics.csv"}, dir + "/report");
    CHECK(res.plot_paths.size() == 4);
    for (const std::string& p : res.plot_paths) {
        CHECK(std::filesystem::exists(p));
        CHECK(testutil::slurp(p).find("<svg") != std::string::npos);
    }
    const std::string summary = testutil::slurp(res.summary_path);
    CHECK(summary.find("final accuracy delta") != std::string::npos);
    CHECK(summary.find("easy") != std::string::npos);
    CHECK(summary.find("hard") != std::string::npos);

    SUBCASE("deterministic output") {
        const ReportResult res2 =
            write_report({dir + "/a/metrics.csv", dir + "/b/metrics.csv"}, dir + "/report2");
        CHECK(testutil::slurp(res.summary_path) == testutil::slurp(res2.summary_path));
        REQUIRE(res2.plot_paths.size() == res.plot_paths.size());
        for (std::size_t i = 0; i < res.plot_paths.size(); ++i)
            CHECK(testutil::slurp(res.plot_paths[i]) == testutil::slurp(res2.plot_paths[i]));
    }

    SUBCASE("header-only input: no plots, summary says so") {
        { MetricsWriter w(dir + "/empty.csv"); }
        const ReportResult res3 = write_report({dir + "/empty.csv"}, dir + "/report3");
        CHECK(res3.plot_paths.empty());
        CHECK(testutil::slurp(res3.summary_path).find("no steps recorded") != std::string::npos);
    }
}
