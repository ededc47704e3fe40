#include "grpolab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace grpolab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// rng stream tags
constexpr std::uint64_t kStreamTasks = 10;
constexpr std::uint64_t kStreamShuffle = 20;
constexpr std::uint64_t kStreamRollout = 30;
constexpr std::uint64_t kStreamEval = 40;

Rng stream_rng(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    return make_rng(derive_seed(derive_seed(derive_seed(master, a), b), c));
}

int tier_of(const McqSample& s) {
    return s.provenance.difficulty && *s.provenance.difficulty == "hard" ? 1 : 0;
}

std::string zero_pad(std::size_t value, std::size_t width) {
    std::string s = std::to_string(value);
    return s.size() >= width ? s : std::string(width - s.size(), '0') + s;
}

// Favored-token rows: logit = gap + ln(conditional prob), everything else 0.
void fill_row(double* row, std::size_t v_total, double gap,
              const std::vector<std::pair<TokenId, double>>& favored) {
    std::fill(row, row + v_total, 0.0);
    for (const auto& [tok, p] : favored) row[tok] = gap + std::log(p);
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["mode"] = run_mode_name(c.mode);
    if (c.dataset_path) j["dataset_path"] = *c.dataset_path;
    j["synthetic"] = {{"easy", c.synthetic.easy},
                      {"hard", c.synthetic.hard},
                      {"easy_prior", c.synthetic.easy_prior},
                      {"hard_prior", c.synthetic.hard_prior},
                      {"n_options", c.synthetic.n_options}};
    j["grpo"] = {{"group_size", c.grpo.group_size},
                 {"eps_clip", c.grpo.eps_clip},
                 {"beta", c.grpo.beta},
                 {"eps_std", c.grpo.eps_std},
                 {"max_resample_rounds", c.grpo.max_resample_rounds},
                 {"lr", c.grpo.lr},
                 {"kl_mode", c.grpo.kl_mode == KlMode::exact ? "exact" : "sampled"},
                 {"optimizer", c.grpo.optimizer == OptimizerKind::adamw ? "adamw" : "sgd"},
                 {"adam_beta1", c.grpo.adam_beta1},
                 {"adam_beta2", c.grpo.adam_beta2},
                 {"adam_eps", c.grpo.adam_eps},
                 {"weight_decay", c.grpo.weight_decay}};
    j["rewards"] = {{"w_cls", c.reward_weights.w_cls},
                    {"w_fmt", c.reward_weights.w_fmt},
                    {"w_cos", c.reward_weights.w_cos},
                    {"w_rep", c.reward_weights.w_rep},
                    {"ngram_n", c.ngram_n}};
    j["cosine"] = {{"l_max", c.cosine.l_max},
                   {"r_correct_at_0", c.cosine.r_correct_at_0},
                   {"r_correct_at_lmax", c.cosine.r_correct_at_lmax},
                   {"r_wrong_at_0", c.cosine.r_wrong_at_0},
                   {"r_wrong_at_lmax", c.cosine.r_wrong_at_lmax}};
    j["policy"] = {{"t_max", c.policy.t_max},
                   {"n_fillers", c.policy.n_fillers},
                   {"context_mode",
                    c.policy.mode == ContextMode::question ? "question" : "question_and_prev"},
                   {"structure_gap", c.policy.structure_gap},
                   {"filler_continue", c.policy.filler_continue}};
    j["steps"] = c.steps;
    j["eval_every"] = c.eval_every;
    j["batch_questions"] = c.batch_questions;
    j["eval_group_size"] = c.eval_group_size;
    j["heldout_think_lengths"] = c.heldout_think_lengths;
    j["sft_think_length"] = c.sft_think_length;
    j["seed"] = c.seed;
    if (!c.out_dir.empty()) j["out_dir"] = c.out_dir;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.schema_version = j.at("schema_version").get<int>();
    const auto mode = run_mode_from_name(j.at("mode").get<std::string>());
    if (!mode) throw std::runtime_error("config: unknown mode '" +
                                        j.at("mode").get<std::string>() + "'");
    c.mode = *mode;
    if (j.contains("dataset_path")) c.dataset_path = j.at("dataset_path").get<std::string>();
    if (j.contains("synthetic")) {
        const json& s = j.at("synthetic");
        c.synthetic.easy = s.value("easy", c.synthetic.easy);
        c.synthetic.hard = s.value("hard", c.synthetic.hard);
        c.synthetic.easy_prior = s.value("easy_prior", c.synthetic.easy_prior);
        c.synthetic.hard_prior = s.value("hard_prior", c.synthetic.hard_prior);
        c.synthetic.n_options = s.value("n_options", c.synthetic.n_options);
    }
    if (j.contains("grpo")) {
        const json& g = j.at("grpo");
        c.grpo.group_size = g.value("group_size", c.grpo.group_size);
        c.grpo.eps_clip = g.value("eps_clip", c.grpo.eps_clip);
        c.grpo.beta = g.value("beta", c.grpo.beta);
        c.grpo.eps_std = g.value("eps_std", c.grpo.eps_std);
        c.grpo.max_resample_rounds = g.value("max_resample_rounds", c.grpo.max_resample_rounds);
        c.grpo.lr = g.value("lr", c.grpo.lr);
        const std::string kl = g.value("kl_mode", std::string("sampled"));
        if (kl == "sampled")
            c.grpo.kl_mode = KlMode::sampled_estimator;
        else if (kl == "exact")
            c.grpo.kl_mode = KlMode::exact;
        else
            throw std::runtime_error("config: unknown kl_mode '" + kl + "'");
        const std::string opt = g.value("optimizer", std::string("sgd"));
        if (opt == "sgd")
            c.grpo.optimizer = OptimizerKind::sgd;
        else if (opt == "adamw")
            c.grpo.optimizer = OptimizerKind::adamw;
        else
            throw std::runtime_error("config: unknown optimizer '" + opt + "'");
        c.grpo.adam_beta1 = g.value("adam_beta1", c.grpo.adam_beta1);
        c.grpo.adam_beta2 = g.value("adam_beta2", c.grpo.adam_beta2);
        c.grpo.adam_eps = g.value("adam_eps", c.grpo.adam_eps);
        c.grpo.weight_decay = g.value("weight_decay", c.grpo.weight_decay);
    }
    if (j.contains("rewards")) {
        const json& r = j.at("rewards");
        c.reward_weights.w_cls = r.value("w_cls", c.reward_weights.w_cls);
        c.reward_weights.w_fmt = r.value("w_fmt", c.reward_weights.w_fmt);
        c.reward_weights.w_cos = r.value("w_cos", c.reward_weights.w_cos);
        c.reward_weights.w_rep = r.value("w_rep", c.reward_weights.w_rep);
        c.ngram_n = r.value("ngram_n", c.ngram_n);
    }
    if (j.contains("cosine")) {
        const json& s = j.at("cosine");
        c.cosine.l_max = s.value("l_max", c.cosine.l_max);
        c.cosine.r_correct_at_0 = s.value("r_correct_at_0", c.cosine.r_correct_at_0);
        c.cosine.r_correct_at_lmax = s.value("r_correct_at_lmax", c.cosine.r_correct_at_lmax);
        c.cosine.r_wrong_at_0 = s.value("r_wrong_at_0", c.cosine.r_wrong_at_0);
        c.cosine.r_wrong_at_lmax = s.value("r_wrong_at_lmax", c.cosine.r_wrong_at_lmax);
    }
    if (j.contains("policy")) {
        const json& p = j.at("policy");
        c.policy.t_max = p.value("t_max", c.policy.t_max);
        c.policy.n_fillers = p.value("n_fillers", c.policy.n_fillers);
        const std::string m = p.value("context_mode", std::string("question_and_prev"));
        if (m == "question")
            c.policy.mode = ContextMode::question;
        else if (m == "question_and_prev")
            c.policy.mode = ContextMode::question_and_prev;
        else
            throw std::runtime_error("config: unknown context_mode '" + m + "'");
        c.policy.structure_gap = p.value("structure_gap", c.policy.structure_gap);
        c.policy.filler_continue = p.value("filler_continue", c.policy.filler_continue);
    }
    c.steps = j.value("steps", c.steps);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.batch_questions = j.value("batch_questions", c.batch_questions);
    c.eval_group_size = j.value("eval_group_size", c.eval_group_size);
    if (j.contains("heldout_think_lengths"))
        c.heldout_think_lengths = j.at("heldout_think_lengths").get<std::vector<std::size_t>>();
    c.sft_think_length = j.value("sft_think_length", c.sft_think_length);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    return c;
}

struct LoadedTasks {
    std::vector<McqSample> samples;
    std::vector<int> tiers;
};

LoadedTasks load_tasks(const ExperimentConfig& cfg) {
    LoadedTasks t;
    if (cfg.dataset_path) {
        t.samples = load_samples(*cfg.dataset_path);
        if (t.samples.empty())
            throw std::runtime_error("dataset " + *cfg.dataset_path + " has no samples");
    } else {
        Rng rng = stream_rng(cfg.seed, kStreamTasks);
        t.samples = make_synthetic_tasks(cfg.synthetic, rng);
    }
    t.tiers = sample_tiers(t.samples);
    return t;
}

// Deterministic epoch scheduler: reshuffles the question order whenever a
// pass completes.
class QuestionScheduler {
public:
    QuestionScheduler(std::size_t n, std::uint64_t master)
        : order_(n), rng_(stream_rng(master, kStreamShuffle)) {
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        shuffle_inplace(order_, rng_);
    }

    std::vector<std::size_t> next_batch(std::size_t count) {
        std::vector<std::size_t> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            if (cursor_ == order_.size()) {
                shuffle_inplace(order_, rng_);
                cursor_ = 0;
            }
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    Rng rng_;
};

void write_summary(const std::string& path, const ExperimentConfig& cfg, const EvalStats& ev,
                   double robustness) {
    json j;
    j["mode"] = run_mode_name(cfg.mode);
    j["seed"] = cfg.seed;
    j["steps"] = cfg.steps;
    j["final"] = {{"accuracy_overall", ev.accuracy_overall},
                  {"accuracy_easy", ev.accuracy_easy},
                  {"accuracy_hard", ev.accuracy_hard},
                  {"format_rate", ev.format_rate},
                  {"mean_reward", ev.mean_reward}};
    j["format_robustness"] = robustness;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << '\n';
}

std::vector<TokenId> sft_template(const McqSample& s, std::size_t q, const Vocabulary& vocab,
                                  std::size_t think_length) {
    std::vector<TokenId> ids;
    ids.push_back(vocab.think_open);
    for (std::size_t i = 0; i < think_length; ++i)
        ids.push_back(vocab.filler_ids[(q + i) % vocab.filler_ids.size()]);
    ids.push_back(vocab.think_close);
    ids.push_back(vocab.answer_open);
    ids.push_back(vocab.choice_ids[s.gold_index]);
    ids.push_back(vocab.answer_close);
    ids.push_back(vocab.eos_id);
    return ids;
}

} // namespace

const char* run_mode_name(RunMode m) {
    switch (m) {
        case RunMode::sft: return "sft";
        case RunMode::grpo_plain: return "grpo_plain";
        case RunMode::grpo_difficulty_aware: return "grpo_difficulty_aware";
    }
    return "unknown";
}

std::optional<RunMode> run_mode_from_name(const std::string& name) {
    if (name == "sft") return RunMode::sft;
    if (name == "grpo_plain") return RunMode::grpo_plain;
    if (name == "grpo_difficulty_aware") return RunMode::grpo_difficulty_aware;
    return std::nullopt;
}

void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.schema_version != 1)
        throw std::runtime_error("config: unsupported schema_version " +
                                 std::to_string(cfg.schema_version));
    if (cfg.steps < 1) throw std::runtime_error("config: steps must be >= 1");
    if (cfg.eval_every < 1) throw std::runtime_error("config: eval_every must be >= 1");
    if (cfg.batch_questions < 1) throw std::runtime_error("config: batch_questions must be >= 1");
    if (cfg.eval_group_size < 1) throw std::runtime_error("config: eval_group_size must be >= 1");
    if (!cfg.dataset_path) {
        if (cfg.synthetic.easy + cfg.synthetic.hard == 0)
            throw std::runtime_error("config: synthetic spec has no questions");
        if (!(cfg.synthetic.easy_prior > 0.0 && cfg.synthetic.easy_prior < 1.0) ||
            !(cfg.synthetic.hard_prior > 0.0 && cfg.synthetic.hard_prior < 1.0))
            throw std::runtime_error("config: tier priors must lie strictly inside (0, 1)");
        if (cfg.synthetic.easy_prior == cfg.synthetic.hard_prior)
            throw std::runtime_error("config: tier priors must be distinct");
        if (cfg.synthetic.n_options < 2 || cfg.synthetic.n_options > 9)
            throw std::runtime_error("config: n_options must be in [2, 9]");
    }
    if (cfg.policy.t_max < cfg.sft_think_length + 6)
        throw std::runtime_error("config: t_max too small for the response template");
    if (cfg.policy.n_fillers < 1) throw std::runtime_error("config: need at least one filler");
    if (!(cfg.policy.filler_continue > 0.0 && cfg.policy.filler_continue < 1.0))
        throw std::runtime_error("config: filler_continue must lie strictly inside (0, 1)");
    if (cfg.heldout_think_lengths.empty())
        throw std::runtime_error("config: heldout_think_lengths must not be empty");
    for (std::size_t l : cfg.heldout_think_lengths)
        if (l + 3 >= cfg.policy.t_max)
            throw std::runtime_error("config: held-out think length exceeds t_max");
    validate_config(cfg.grpo);
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: " + path + ": " + e.what());
    }
    ExperimentConfig cfg = config_from_json(j);
    validate_experiment_config(cfg);
    return cfg;
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("config: cannot open " + path + " for writing");
    out << config_to_json(cfg).dump(2) << '\n';
}

std::vector<int> sample_tiers(const std::vector<McqSample>& samples) {
    std::vector<int> tiers(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) tiers[i] = tier_of(samples[i]);
    return tiers;
}

std::vector<McqSample> make_synthetic_tasks(const SyntheticSpec& spec, Rng& rng) {
    std::vector<McqSample> samples;
    samples.reserve(spec.easy + spec.hard);
    for (std::size_t i = 0; i < spec.easy + spec.hard; ++i) {
        McqSample s;
        s.task = TaskKind::defect_classification;
        s.question = "Calibration item " + std::to_string(i) + ": which variant is correct?";
        for (std::size_t o = 0; o < spec.n_options; ++o)
            s.options.push_back("variant " + std::to_string(o + 1));
        s.gold_index = rand_below(rng, spec.n_options);
        s.query = QueryRef{QueryRef::Kind::text, "synthetic calibration item " + std::to_string(i)};
        s.provenance.record_id = "syn-" + zero_pad(i, 4);
        s.provenance.split = "train";
        s.provenance.difficulty = i < spec.easy ? "easy" : "hard";
        validate_sample(s);
        samples.push_back(std::move(s));
    }
    return samples;
}

PolicyParams init_policy_for_tasks(const std::vector<McqSample>& samples,
                                   const Vocabulary& vocab, const PolicyInitConfig& pc,
                                   const SyntheticSpec& priors) {
    if (pc.mode != ContextMode::question_and_prev)
        throw std::invalid_argument(
            "init_policy_for_tasks: grammar initialization needs previous-token conditioning");
    if (samples.empty()) throw std::invalid_argument("init_policy_for_tasks: no samples");

    const std::size_t v_total = vocab.size();
    PolicyParams params =
        make_policy(v_total, pc.t_max, samples.size(), ContextMode::question_and_prev, 0.0);

    const double gap = pc.structure_gap;
    const double p_cont = pc.filler_continue;
    const std::size_t n_fillers = vocab.filler_ids.size();

    for (std::size_t q = 0; q < samples.size(); ++q) {
        const McqSample& s = samples[q];
        const double prior = tier_of(s) == 1 ? priors.hard_prior : priors.easy_prior;
        const std::size_t n_opt = s.n_options();

        // think span: keep going with a filler or close the span
        std::vector<std::pair<TokenId, double>> span;
        span.emplace_back(vocab.think_close, 1.0 - p_cont);
        for (TokenId f : vocab.filler_ids) span.emplace_back(f, p_cont / static_cast<double>(n_fillers));

        // answer slot: tier prior on the gold letter, rest spread evenly
        std::vector<std::pair<TokenId, double>> answer_slot;
        for (std::size_t o = 0; o < n_opt; ++o)
            answer_slot.emplace_back(vocab.choice_ids[o],
                                     o == s.gold_index
                                         ? prior
                                         : (1.0 - prior) / static_cast<double>(n_opt - 1));

        for (TokenId prev = 0; prev < v_total; ++prev) {
            const std::size_t ctx = params.effective_context(q, prev);
            std::vector<std::pair<TokenId, double>> favored;
            if (prev == vocab.eos_id) {
                favored = {{vocab.think_open, 1.0}};
            } else if (prev == vocab.think_open ||
                       std::find(vocab.filler_ids.begin(), vocab.filler_ids.end(), prev) !=
                           vocab.filler_ids.end()) {
                favored = span;
            } else if (prev == vocab.think_close) {
                favored = {{vocab.answer_open, 1.0}};
            } else if (prev == vocab.answer_open) {
                favored = answer_slot;
            } else if (vocab.is_choice(prev)) {
                favored = {{vocab.answer_close, 1.0}};
            } else {  // prev == answer_close
                favored = {{vocab.eos_id, 1.0}};
            }
            for (std::size_t t = 0; t < pc.t_max; ++t)
                fill_row(params.row(ctx, t), v_total, gap, favored);
        }
    }
    return params;
}

EvalStats evaluate_policy(const PolicyParams& params, const Vocabulary& vocab,
                          const std::vector<McqSample>& samples, const RewardScorer& scorer,
                          std::size_t eval_group, Rng& rng,
                          const std::string* rewards_jsonl_path) {
    EvalStats st;
    std::ofstream rewards_log;
    if (rewards_jsonl_path) {
        rewards_log.open(*rewards_jsonl_path, std::ios::binary | std::ios::trunc);
        if (!rewards_log)
            throw std::runtime_error("evaluate_policy: cannot open " + *rewards_jsonl_path);
    }
    std::size_t n_total = 0, n_correct = 0, n_format = 0;
    std::size_t tier_total[2] = {0, 0}, tier_correct[2] = {0, 0};
    double reward_sum = 0.0;
    for (std::size_t q = 0; q < samples.size(); ++q) {
        const int tier = tier_of(samples[q]);
        std::vector<Response> group = sample(params, vocab, q, eval_group, rng);
        for (Response& r : group) {
            const RewardBreakdown b =
                scorer.score_response(r, samples[q].gold_letter(), samples[q].n_options());
            if (rewards_jsonl_path) rewards_log << breakdown_to_json(b) << '\n';
            ++n_total;
            ++tier_total[tier];
            if (b.classification == 1) {
                ++n_correct;
                ++tier_correct[tier];
            }
            if (b.format == 1) ++n_format;
            reward_sum += b.total;
        }
    }
    st.accuracy_overall = static_cast<double>(n_correct) / static_cast<double>(n_total);
    st.format_rate = static_cast<double>(n_format) / static_cast<double>(n_total);
    st.mean_reward = reward_sum / static_cast<double>(n_total);
    st.accuracy_easy = tier_total[0] ? static_cast<double>(tier_correct[0]) /
                                           static_cast<double>(tier_total[0])
                                     : st.accuracy_overall;
    st.accuracy_hard = tier_total[1] ? static_cast<double>(tier_correct[1]) /
                                           static_cast<double>(tier_total[1])
                                     : st.accuracy_overall;
    return st;
}

double format_robustness(const PolicyParams& params, const Vocabulary& vocab,
                         const std::vector<McqSample>& samples,
                         const std::vector<std::size_t>& heldout_lengths) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t q = 0; q < samples.size(); ++q) {
        const TokenId gold_tok = vocab.choice_ids[samples[q].gold_index];
        for (std::size_t len : heldout_lengths) {
            const std::size_t t = len + 3;  // <think> fillers </think> <answer> letter
            if (t >= params.t_max) continue;
            const std::size_t ctx = params.effective_context(q, vocab.answer_open);
            const std::vector<double> probs = softmax_row(params.row(ctx, t), params.vocab_size);
            sum += probs[gold_tok];
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("format_robustness: no held-out positions");
    return sum / static_cast<double>(count);
}

RunResult run_grpo(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    if (cfg.mode == RunMode::sft)
        throw std::invalid_argument("run_grpo called with sft mode");
    fs::create_directories(cfg.out_dir);

    const Vocabulary vocab = make_vocabulary(9, cfg.policy.n_fillers);
    LoadedTasks tasks = load_tasks(cfg);
    const RewardScorer scorer(vocab, cfg.reward_weights, cfg.cosine, cfg.ngram_n);

    GrpoConfig gcfg = cfg.grpo;
    gcfg.seed = cfg.seed;
    const bool difficulty_aware = cfg.mode == RunMode::grpo_difficulty_aware;
    if (!difficulty_aware) gcfg.max_resample_rounds = 0;

    TrainState state(init_policy_for_tasks(tasks.samples, vocab, cfg.policy, cfg.synthetic), gcfg);

    MetricsWriter metrics((fs::path(cfg.out_dir) / "metrics.csv").string());
    QuestionScheduler scheduler(tasks.samples.size(), cfg.seed);

    // last observed per-tier rollout accuracy, carried over steps whose
    // mini-batch misses a tier
    double acc_tier[2] = {0.0, 0.0};

    for (std::size_t s = 1; s <= cfg.steps; ++s) {
        const std::vector<std::size_t> question_ids = scheduler.next_batch(cfg.batch_questions);
        std::vector<GroupBatch> batches;
        batches.reserve(question_ids.size());
        std::vector<Rng> rollout_rngs;
        rollout_rngs.reserve(question_ids.size());
        for (std::size_t slot = 0; slot < question_ids.size(); ++slot)
            rollout_rngs.push_back(stream_rng(cfg.seed, kStreamRollout, s, slot));
        for (std::size_t slot = 0; slot < question_ids.size(); ++slot) {
            const std::size_t q = question_ids[slot];
            const GroupSampler sampler = default_group_sampler(
                state.theta_old, vocab, q, gcfg.group_size, rollout_rngs[slot]);
            GroupBatch batch =
                rollout_with_resampling(tasks.samples[q], q, sampler, scorer, gcfg);
            if (!difficulty_aware) batch.weight = 1.0;
            batches.push_back(std::move(batch));
        }

        const StepReport rep = step(state, batches, gcfg);

        std::size_t tier_resp[2] = {0, 0}, tier_corr[2] = {0, 0}, fmt_ok = 0, resp_total = 0;
        for (std::size_t slot = 0; slot < batches.size(); ++slot) {
            const int tier = tasks.tiers[question_ids[slot]];
            for (std::size_t i = 0; i < batches[slot].correct.size(); ++i) {
                ++tier_resp[tier];
                ++resp_total;
                if (batches[slot].correct[i]) ++tier_corr[tier];
                if (batches[slot].rewards[i].format == 1) ++fmt_ok;
            }
        }
        for (int tier = 0; tier < 2; ++tier)
            if (tier_resp[tier])
                acc_tier[tier] =
                    static_cast<double>(tier_corr[tier]) / static_cast<double>(tier_resp[tier]);

        MetricsRow row;
        row.step = s;
        row.mean_reward = rep.mean_reward;
        row.accuracy_overall = static_cast<double>(tier_corr[0] + tier_corr[1]) /
                               static_cast<double>(resp_total);
        row.accuracy_easy = acc_tier[0];
        row.accuracy_hard = acc_tier[1];
        row.mean_weight = rep.mean_weight;
        row.resample_fraction = rep.resampled_fraction;
        row.format_rate = static_cast<double>(fmt_ok) / static_cast<double>(resp_total);
        row.objective = rep.objective;
        row.grad_norm = rep.grad_norm;
        metrics.append(row);
    }

    RunResult result;
    Rng eval_rng = stream_rng(cfg.seed, kStreamEval);
    const std::string rewards_path = (fs::path(cfg.out_dir) / "eval_rewards.jsonl").string();
    result.final_eval = evaluate_policy(state.theta, vocab, tasks.samples, scorer,
                                        cfg.eval_group_size, eval_rng, &rewards_path);
    result.robustness =
        format_robustness(state.theta, vocab, tasks.samples, cfg.heldout_think_lengths);
    result.metrics_path = metrics.path();
    result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
    save_checkpoint(state.theta, result.checkpoint_path);
    result.summary_path = (fs::path(cfg.out_dir) / "summary.json").string();
    write_summary(result.summary_path, cfg, result.final_eval, result.robustness);
    ExperimentConfig echo = cfg;
    echo.out_dir.clear();  // run placement is not experiment content
    save_experiment_config(echo, (fs::path(cfg.out_dir) / "config.json").string());
    return result;
}

RunResult run_sft(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    if (cfg.mode != RunMode::sft) throw std::invalid_argument("run_sft needs sft mode");
    fs::create_directories(cfg.out_dir);

    const Vocabulary vocab = make_vocabulary(9, cfg.policy.n_fillers);
    LoadedTasks tasks = load_tasks(cfg);
    const RewardScorer scorer(vocab, cfg.reward_weights, cfg.cosine, cfg.ngram_n);

    PolicyParams theta = init_policy_for_tasks(tasks.samples, vocab, cfg.policy, cfg.synthetic);
    GrpoConfig gcfg = cfg.grpo;
    gcfg.seed = cfg.seed;
    Optimizer optimizer(gcfg);

    std::vector<std::vector<TokenId>> templates(tasks.samples.size());
    for (std::size_t q = 0; q < tasks.samples.size(); ++q)
        templates[q] = sft_template(tasks.samples[q], q, vocab, cfg.sft_think_length);

    MetricsWriter metrics((fs::path(cfg.out_dir) / "metrics.csv").string());

    // full-batch likelihood ascent over the gold templates
    std::vector<double> grad(theta.logits.size(), 0.0);
    for (std::size_t s = 1; s <= cfg.steps; ++s) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double inv_b = 1.0 / static_cast<double>(tasks.samples.size());
        double objective_value = 0.0;
        for (std::size_t q = 0; q < tasks.samples.size(); ++q) {
            const std::vector<TokenId>& tpl = templates[q];
            const double inv_len = 1.0 / static_cast<double>(tpl.size());
            const std::vector<double> lp = logprob(theta, q, tpl);
            for (std::size_t t = 0; t < tpl.size(); ++t) {
                objective_value += inv_b * inv_len * lp[t];
                accumulate_logprob_grad(theta, q, tpl, t, inv_b * inv_len, grad);
            }
        }
        double norm_sq = 0.0;
        for (double g : grad) norm_sq += g * g;
        if (!std::isfinite(norm_sq) || !std::isfinite(objective_value))
            throw std::runtime_error("run_sft: non-finite objective or gradient at step " +
                                     std::to_string(s));
        optimizer.apply(theta.logits, grad, gcfg.lr);

        if (s % cfg.eval_every == 0 || s == cfg.steps) {
            Rng eval_rng = stream_rng(cfg.seed, kStreamEval);
            const EvalStats ev =
                evaluate_policy(theta, vocab, tasks.samples, scorer, cfg.eval_group_size, eval_rng);
            MetricsRow row;
            row.step = s;
            row.mean_reward = ev.mean_reward;
            row.accuracy_overall = ev.accuracy_overall;
            row.accuracy_easy = ev.accuracy_easy;
            row.accuracy_hard = ev.accuracy_hard;
            row.mean_weight = 1.0;
            row.resample_fraction = 0.0;
            row.format_rate = ev.format_rate;
            row.objective = objective_value;
            row.grad_norm = std::sqrt(norm_sq);
            metrics.append(row);
        }
    }

    RunResult result;
    Rng eval_rng = stream_rng(cfg.seed, kStreamEval);
    const std::string rewards_path = (fs::path(cfg.out_dir) / "eval_rewards.jsonl").string();
    result.final_eval = evaluate_policy(theta, vocab, tasks.samples, scorer, cfg.eval_group_size,
                                        eval_rng, &rewards_path);
    result.robustness = format_robustness(theta, vocab, tasks.samples, cfg.heldout_think_lengths);
    result.metrics_path = metrics.path();
    result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
    save_checkpoint(theta, result.checkpoint_path);
    result.summary_path = (fs::path(cfg.out_dir) / "summary.json").string();
    write_summary(result.summary_path, cfg, result.final_eval, result.robustness);
    ExperimentConfig echo = cfg;
    echo.out_dir.clear();
    save_experiment_config(echo, (fs::path(cfg.out_dir) / "config.json").string());
    return result;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    return cfg.mode == RunMode::sft ? run_sft(cfg) : run_grpo(cfg);
}

} // namespace grpolab
