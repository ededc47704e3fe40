#include "grpolab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace grpolab {

namespace {

// Sparse per-question gradient: touched logits rows in insertion order so
// merging into the dense buffer is deterministic.
struct SparseRowGrad {
    std::size_t vocab_size = 0;
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;  // (flat row start, values)
    std::unordered_map<std::size_t, std::size_t> slot;

    explicit SparseRowGrad(std::size_t v) : vocab_size(v) {}

    std::vector<double>& row(std::size_t flat_start) {
        auto it = slot.find(flat_start);
        if (it != slot.end()) return rows[it->second].second;
        slot.emplace(flat_start, rows.size());
        rows.emplace_back(flat_start, std::vector<double>(vocab_size, 0.0));
        return rows.back().second;
    }

    void clear() {
        rows.clear();
        slot.clear();
    }
};

} // namespace

void validate_config(const GrpoConfig& cfg) {
    if (cfg.group_size < 2) throw std::invalid_argument("grpo config: G must be >= 2");
    if (!(cfg.eps_clip > 0.0 && cfg.eps_clip < 1.0))
        throw std::invalid_argument("grpo config: eps_clip must be in (0, 1)");
    if (cfg.beta < 0.0) throw std::invalid_argument("grpo config: beta must be >= 0");
    if (cfg.eps_std <= 0.0) throw std::invalid_argument("grpo config: eps_std must be > 0");
    if (cfg.lr < 0.0) throw std::invalid_argument("grpo config: lr must be >= 0");
}

std::vector<double> compute_advantages(const std::vector<double>& totals, double eps_std) {
    const std::size_t g = totals.size();
    if (g < 2) throw std::invalid_argument("compute_advantages: need a group of at least 2");
    double mean = 0.0;
    for (double r : totals) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : totals) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);  // population variance
    const double sd = std::sqrt(var);
    std::vector<double> adv(g, 0.0);
    if (sd <= eps_std) return adv;
    for (std::size_t i = 0; i < g; ++i) adv[i] = (totals[i] - mean) / sd;
    return adv;
}

double difficulty_weight(const std::vector<char>& correct_flags) {
    if (correct_flags.empty())
        throw std::invalid_argument("difficulty_weight: empty correctness list");
    std::size_t incorrect = 0;
    for (char c : correct_flags)
        if (!c) ++incorrect;
    return static_cast<double>(incorrect) / static_cast<double>(correct_flags.size()) + 1.0;
}

std::vector<double> reweight(const std::vector<double>& advantages, double w) {
    if (w < 1.0) throw std::invalid_argument("reweight: weight must be >= 1");
    std::vector<double> out(advantages.size());
    for (std::size_t i = 0; i < advantages.size(); ++i) out[i] = w * advantages[i];
    return out;
}

double token_kl(double logprob_theta, double logprob_ref) {
    const double d = logprob_ref - logprob_theta;
    return std::exp(d) - d - 1.0;
}

double exact_token_kl(const std::vector<double>& logprob_theta_row,
                      const std::vector<double>& logprob_ref_row) {
    if (logprob_theta_row.size() != logprob_ref_row.size())
        throw std::invalid_argument("exact_token_kl: row length mismatch");
    double kl = 0.0;
    for (std::size_t v = 0; v < logprob_theta_row.size(); ++v)
        kl += std::exp(logprob_theta_row[v]) * (logprob_theta_row[v] - logprob_ref_row[v]);
    return kl;
}

GroupSampler default_group_sampler(const PolicyParams& params_old, const Vocabulary& vocab,
                                   std::size_t question_context, std::size_t group_size, Rng& rng) {
    return [&params_old, &vocab, question_context, group_size, &rng]() {
        return sample(params_old, vocab, question_context, group_size, rng);
    };
}

GroupBatch rollout_with_resampling(const McqSample& question, std::size_t policy_context,
                                   const GroupSampler& sampler, const RewardScorer& scorer,
                                   const GrpoConfig& cfg) {
    validate_config(cfg);
    const char gold = question.gold_letter();

    GroupBatch batch;
    batch.question = &question;
    batch.policy_context = policy_context;

    for (std::size_t round = 0;; ++round) {
        std::vector<Response> group = sampler();
        if (group.size() != cfg.group_size)
            throw std::invalid_argument("rollout: sampler returned " +
                                        std::to_string(group.size()) + " responses, expected " +
                                        std::to_string(cfg.group_size));
        bool any_correct = false;
        std::vector<char> flags(group.size(), 0);
        for (std::size_t i = 0; i < group.size(); ++i) {
            const auto parsed = parse_answer(group[i].text);
            flags[i] = (parsed && *parsed == gold) ? 1 : 0;
            any_correct = any_correct || flags[i];
        }
        batch.resample_rounds = round;
        if (any_correct || round >= cfg.max_resample_rounds) {
            batch.resample_exhausted = !any_correct;
            batch.responses = std::move(group);
            batch.correct = std::move(flags);
            break;
        }
        // entire group discarded; nothing from it reaches the update
    }

    std::vector<double> totals(batch.responses.size());
    batch.rewards.resize(batch.responses.size());
    for (std::size_t i = 0; i < batch.responses.size(); ++i) {
        batch.rewards[i] = scorer.score_response(batch.responses[i], gold, question.n_options());
        totals[i] = batch.rewards[i].total;
    }
    batch.advantages = compute_advantages(totals, cfg.eps_std);
    batch.weight = difficulty_weight(batch.correct);
    return batch;
}

ObjectiveResult objective(const std::vector<GroupBatch>& batches, const PolicyParams& theta,
                          const PolicyParams& theta_old, const PolicyParams& theta_ref,
                          const GrpoConfig& cfg, std::vector<int>* branch_trace) {
    if (!theta.same_shape(theta_old) || !theta.same_shape(theta_ref))
        throw std::invalid_argument("objective: policy parameter shapes differ");
    if (batches.empty()) throw std::invalid_argument("objective: no batches");
    if (branch_trace) branch_trace->clear();

    ObjectiveResult out;
    out.grad.assign(theta.logits.size(), 0.0);

    const double inv_b = 1.0 / static_cast<double>(batches.size());
    const double lo = 1.0 - cfg.eps_clip;
    const double hi = 1.0 + cfg.eps_clip;

    SparseRowGrad pg_grad(theta.vocab_size);
    SparseRowGrad kl_grad(theta.vocab_size);

    for (const GroupBatch& batch : batches) {
        std::size_t total_len = 0;
        for (const Response& r : batch.responses) total_len += r.token_ids.size();
        if (total_len == 0) throw std::invalid_argument("objective: batch with empty responses");
        const double inv_len = 1.0 / static_cast<double>(total_len);

        pg_grad.clear();
        kl_grad.clear();
        double pg_sum = 0.0;
        double kl_sum = 0.0;

        for (std::size_t i = 0; i < batch.responses.size(); ++i) {
            const Response& resp = batch.responses[i];
            const double adv = batch.advantages[i];
            const std::vector<double> lp_theta =
                logprob(theta, batch.policy_context, resp.token_ids);
            const std::vector<double> lp_ref =
                cfg.beta > 0.0 && cfg.kl_mode == KlMode::sampled_estimator
                    ? logprob(theta_ref, batch.policy_context, resp.token_ids)
                    : std::vector<double>();

            for (std::size_t t = 0; t < resp.token_ids.size(); ++t) {
                const double rho = std::exp(lp_theta[t] - resp.logprobs_old[t]);
                const double unclipped = rho * adv;
                const double clipped = std::clamp(rho, lo, hi) * adv;
                const bool take_unclipped = unclipped <= clipped;
                pg_sum += take_unclipped ? unclipped : clipped;
                if (branch_trace) branch_trace->push_back(take_unclipped ? 0 : 1);

                std::size_t ctx = 0;
                std::vector<double> g;
                auto grad_row = [&]() -> const std::vector<double>& {
                    if (g.empty())
                        g = logprob_grad_row(theta, batch.policy_context, resp.token_ids, t, &ctx);
                    return g;
                };

                if (take_unclipped && adv != 0.0) {
                    const double coeff = inv_len * adv * rho;
                    const std::vector<double>& row = grad_row();
                    std::vector<double>& dst = pg_grad.row(theta.index(ctx, t, 0));
                    for (std::size_t v = 0; v < theta.vocab_size; ++v) dst[v] += coeff * row[v];
                }
                // saturated clip branch: derivative of the surrogate is zero

                if (cfg.beta > 0.0) {
                    if (cfg.kl_mode == KlMode::sampled_estimator) {
                        const double d = lp_ref[t] - lp_theta[t];
                        kl_sum += std::exp(d) - d - 1.0;
                        const double coeff = inv_len * (-cfg.beta) * (1.0 - std::exp(d));
                        const std::vector<double>& row = grad_row();
                        std::vector<double>& dst = kl_grad.row(theta.index(ctx, t, 0));
                        for (std::size_t v = 0; v < theta.vocab_size; ++v) dst[v] += coeff * row[v];
                    } else {
                        grad_row();  // resolves ctx
                        const std::vector<double> x =
                            log_softmax_row(theta.row(ctx, t), theta.vocab_size);
                        const std::vector<double> r =
                            log_softmax_row(theta_ref.row(ctx, t), theta.vocab_size);
                        const double kl = exact_token_kl(x, r);
                        kl_sum += kl;
                        std::vector<double>& dst = kl_grad.row(theta.index(ctx, t, 0));
                        const double coeff = inv_len * (-cfg.beta);
                        for (std::size_t v = 0; v < theta.vocab_size; ++v)
                            dst[v] += coeff * std::exp(x[v]) * ((x[v] - r[v]) - kl);
                    }
                }
            }
        }

        // J_q = (w * sum_min - beta * sum_kl) / total_len; the difficulty
        // weight scales only the policy-gradient term (A' = w * A factored
        // out of both min branches, which is valid since w > 0).
        out.value += inv_b * (batch.weight * (inv_len * pg_sum) - cfg.beta * (inv_len * kl_sum));
        for (const auto& [start, row] : pg_grad.rows)
            for (std::size_t v = 0; v < theta.vocab_size; ++v)
                out.grad[start + v] += inv_b * (batch.weight * row[v]);
        for (const auto& [start, row] : kl_grad.rows)
            for (std::size_t v = 0; v < theta.vocab_size; ++v)
                out.grad[start + v] += inv_b * row[v];
    }
    return out;
}

Optimizer::Optimizer(const GrpoConfig& cfg) : cfg_(cfg) {}

void Optimizer::apply(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    if (params.size() != grad.size())
        throw std::invalid_argument("optimizer: parameter/gradient size mismatch");
    if (cfg_.optimizer == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] += lr * grad[i];
        return;
    }
    if (m_.size() != params.size()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    ++step_count_;
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] += lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
        params[i] -= lr * cfg_.weight_decay * params[i];
    }
}

StepReport step(TrainState& state, const std::vector<GroupBatch>& batches, const GrpoConfig& cfg) {
    const ObjectiveResult res =
        objective(batches, state.theta, state.theta_old, state.theta_ref, cfg);

    double norm_sq = 0.0;
    for (double g : res.grad) norm_sq += g * g;
    if (!std::isfinite(norm_sq) || !std::isfinite(res.value))
        throw std::runtime_error("step: non-finite objective or gradient (J=" +
                                 std::to_string(res.value) + ", |grad|^2=" +
                                 std::to_string(norm_sq) + ")");

    state.optimizer.apply(state.theta.logits, res.grad, cfg.lr);
    state.theta_old = state.theta;  // one inner epoch per sampled group

    StepReport rep;
    rep.objective = res.value;
    rep.grad_norm = std::sqrt(norm_sq);
    std::size_t n_resp = 0;
    std::size_t n_resampled = 0;
    double reward_sum = 0.0;
    double weight_sum = 0.0;
    double correct_sum = 0.0;
    for (const GroupBatch& b : batches) {
        for (const RewardBreakdown& r : b.rewards) reward_sum += r.total;
        n_resp += b.rewards.size();
        if (b.resample_rounds > 0) ++n_resampled;
        weight_sum += b.weight;
        std::size_t c = 0;
        for (char f : b.correct)
            if (f) ++c;
        correct_sum += static_cast<double>(c) / static_cast<double>(b.correct.size());
    }
    const double nb = static_cast<double>(batches.size());
    rep.mean_reward = reward_sum / static_cast<double>(n_resp);
    rep.resampled_fraction = static_cast<double>(n_resampled) / nb;
    rep.mean_weight = weight_sum / nb;
    rep.correct_rate = correct_sum / nb;
    return rep;
}

} // namespace grpolab
