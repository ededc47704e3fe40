#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "grpolab/policy.hpp"
#include "grpolab/rewards.hpp"
#include "grpolab/taskgen.hpp"

namespace grpolab {

enum class KlMode { sampled_estimator, exact };
enum class OptimizerKind { sgd, adamw };

struct GrpoConfig {
    std::size_t group_size = 8;          // G
    double eps_clip = 0.2;               // epsilon of the clipped ratio
    double beta = 0.01;                  // KL penalty weight
    double eps_std = 1e-6;               // std floor for advantage standardization
    std::size_t max_resample_rounds = 4; // extra full-group draws for all-wrong groups
    double lr = 0.05;
    std::uint64_t seed = 1;
    KlMode kl_mode = KlMode::sampled_estimator;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
};

void validate_config(const GrpoConfig& cfg);

// One question with its sampled group, rewards and learning signal. The
// advantages are group-standardized and NOT yet multiplied by the difficulty
// weight; the objective applies the weight.
struct GroupBatch {
    const McqSample* question = nullptr;
    std::size_t policy_context = 0;
    std::vector<Response> responses;
    std::vector<RewardBreakdown> rewards;
    std::vector<char> correct;    // 0/1 per response
    std::vector<double> advantages;
    double weight = 1.0;          // w = (#incorrect)/G + 1
    std::size_t resample_rounds = 0;
    bool resample_exhausted = false;  // true when R_max rounds passed with no correct answer
};

struct StepReport {
    double objective = 0.0;
    double grad_norm = 0.0;
    double mean_reward = 0.0;
    double resampled_fraction = 0.0;
    double mean_weight = 0.0;
    double correct_rate = 0.0;
};

// (r_i - mean) / population-std over the group; all zeros when the std is at
// or below eps_std. Throws std::invalid_argument for groups smaller than 2.
std::vector<double> compute_advantages(const std::vector<double>& totals, double eps_std);

// (#incorrect)/G + 1, in [1, 2]. Throws on an empty list.
double difficulty_weight(const std::vector<char>& correct_flags);

// Elementwise w * advantage. Requires w >= 1.
std::vector<double> reweight(const std::vector<double>& advantages, double w);

// Non-negative per-token divergence estimator:
//   exp(l_ref - l_theta) - (l_ref - l_theta) - 1.
double token_kl(double logprob_theta, double logprob_ref);

// Exact divergence between two log-probability rows of equal length:
//   sum_v exp(l_theta[v]) * (l_theta[v] - l_ref[v]).
double exact_token_kl(const std::vector<double>& logprob_theta_row,
                      const std::vector<double>& logprob_ref_row);

// Each call draws one fresh group of G responses.
using GroupSampler = std::function<std::vector<Response>()>;

GroupSampler default_group_sampler(const PolicyParams& params_old, const Vocabulary& vocab,
                                   std::size_t question_context, std::size_t group_size, Rng& rng);

// Draws a group, discarding and redrawing the whole group while it contains
// no correct answer, up to cfg.max_resample_rounds extra rounds. Rewards,
// advantages and the difficulty weight are computed on the returned group.
GroupBatch rollout_with_resampling(const McqSample& question, std::size_t policy_context,
                                   const GroupSampler& sampler, const RewardScorer& scorer,
                                   const GrpoConfig& cfg);

struct ObjectiveResult {
    double value = 0.0;
    std::vector<double> grad;  // same shape as theta.logits
};

// Token-level clipped surrogate with KL penalty, averaged over questions:
//   J_q = (1/sum_i |o_i|) sum_i sum_t [ min(rho*A', clip(rho)*A') - beta*kl ]
// with rho = pi_theta / pi_theta_old per token and A' = w * A. Returns J and
// its exact gradient with respect to theta's logits; at min ties the
// unclipped branch is differentiated. `branch_trace`, when given, receives
// one entry per token: 0 unclipped branch, 1 saturated clip branch.
ObjectiveResult objective(const std::vector<GroupBatch>& batches, const PolicyParams& theta,
                          const PolicyParams& theta_old, const PolicyParams& theta_ref,
                          const GrpoConfig& cfg, std::vector<int>* branch_trace = nullptr);

// First/second-moment state for the adamw option; sgd keeps no state. The
// kind and moment parameters are fixed at construction, the learning rate
// comes with each call.
class Optimizer {
public:
    explicit Optimizer(const GrpoConfig& cfg);
    // Ascent step: params += lr * direction(grad).
    void apply(std::vector<double>& params, const std::vector<double>& grad, double lr);

private:
    GrpoConfig cfg_;
    std::size_t step_count_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

// theta (trainable), theta_old (sampling snapshot), theta_ref (frozen).
struct TrainState {
    PolicyParams theta;
    PolicyParams theta_old;
    PolicyParams theta_ref;
    Optimizer optimizer;

    TrainState(PolicyParams initial, const GrpoConfig& cfg)
        : theta(initial), theta_old(initial), theta_ref(std::move(initial)), optimizer(cfg) {}
};

// One ascent update on batches produced under state.theta_old; refreshes
// theta_old from the updated theta. Throws std::runtime_error on a
// non-finite gradient.
StepReport step(TrainState& state, const std::vector<GroupBatch>& batches, const GrpoConfig& cfg);

} // namespace grpolab
