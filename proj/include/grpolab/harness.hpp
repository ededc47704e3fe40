#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grpolab/grpo.hpp"
#include "grpolab/metrics.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/rewards.hpp"
#include "grpolab/taskgen.hpp"

namespace grpolab {

enum class RunMode { sft, grpo_plain, grpo_difficulty_aware };

const char* run_mode_name(RunMode m);
std::optional<RunMode> run_mode_from_name(const std::string& name);

// Synthetic question set with controlled difficulty: the policy initializer
// gives the gold answer a high prior on the easy tier and a low prior on the
// hard tier.
struct SyntheticSpec {
    std::size_t easy = 50;
    std::size_t hard = 50;
    double easy_prior = 0.9;
    double hard_prior = 0.05;
    std::size_t n_options = 4;
};

struct PolicyInitConfig {
    std::size_t t_max = 32;
    std::size_t n_fillers = 4;
    ContextMode mode = ContextMode::question_and_prev;
    double structure_gap = 10.0;    // logit margin of grammar-consistent tokens
    double filler_continue = 0.5;   // P(stay in the think span per step)
};

struct ExperimentConfig {
    int schema_version = 1;
    RunMode mode = RunMode::grpo_difficulty_aware;
    std::optional<std::string> dataset_path;  // JSON Lines of samples; synthetic spec otherwise
    SyntheticSpec synthetic;
    GrpoConfig grpo;
    RewardWeights reward_weights;
    std::size_t ngram_n = 3;
    CosineSchedule cosine;
    PolicyInitConfig policy;
    std::size_t steps = 200;
    std::size_t eval_every = 10;
    std::size_t batch_questions = 8;
    std::size_t eval_group_size = 50;
    std::vector<std::size_t> heldout_think_lengths = {0, 1, 3, 4};
    std::size_t sft_think_length = 2;
    std::uint64_t seed = 1;
    std::string out_dir = "runs/out";
};

void validate_experiment_config(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

// Per-sample difficulty tier; 0 = easy (or untagged), 1 = hard.
std::vector<int> sample_tiers(const std::vector<McqSample>& samples);

std::vector<McqSample> make_synthetic_tasks(const SyntheticSpec& spec, Rng& rng);

// Grammar-consistent initialization: structural transitions get a
// `structure_gap` logit margin and the answer slot encodes the tier prior of
// the gold letter.
PolicyParams init_policy_for_tasks(const std::vector<McqSample>& samples,
                                   const Vocabulary& vocab, const PolicyInitConfig& pc,
                                   const SyntheticSpec& priors);

struct EvalStats {
    double accuracy_overall = 0.0;
    double accuracy_easy = 0.0;
    double accuracy_hard = 0.0;
    double format_rate = 0.0;
    double mean_reward = 0.0;
};

// Sampled evaluation: eval_group responses per question under `params`.
// When rewards_jsonl_path is given, every response's reward breakdown is
// appended there as one flat JSON object per line.
EvalStats evaluate_policy(const PolicyParams& params, const Vocabulary& vocab,
                          const std::vector<McqSample>& samples, const RewardScorer& scorer,
                          std::size_t eval_group, Rng& rng,
                          const std::string* rewards_jsonl_path = nullptr);

// Mean exact gold-answer probability at the answer slot across think-span
// lengths the training template never used: a policy that only learned one
// response shape scores near its initialization here.
double format_robustness(const PolicyParams& params, const Vocabulary& vocab,
                         const std::vector<McqSample>& samples,
                         const std::vector<std::size_t>& heldout_lengths);

struct RunResult {
    EvalStats final_eval;
    double robustness = 0.0;
    std::string metrics_path;
    std::string checkpoint_path;
    std::string summary_path;
};

RunResult run_sft(const ExperimentConfig& cfg);
RunResult run_grpo(const ExperimentConfig& cfg);
RunResult run_experiment(const ExperimentConfig& cfg);  // dispatches on cfg.mode

} // namespace grpolab
