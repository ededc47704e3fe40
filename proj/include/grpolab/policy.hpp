#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grpolab/rng.hpp"
#include "grpolab/vocab.hpp"

namespace grpolab {

enum class ContextMode : std::uint32_t {
    question = 0,             // one categorical table per question
    question_and_prev = 1,    // table per (question, previous token)
};

// Tabular autoregressive categorical policy. Logits are indexed by
// (effective context, position, token); with ContextMode::question_and_prev
// the previous token is folded into the effective context, using eos as the
// previous token of position 0.
struct PolicyParams {
    std::size_t vocab_size = 0;
    std::size_t t_max = 0;
    std::size_t n_question_contexts = 0;
    ContextMode mode = ContextMode::question;
    std::vector<double> logits;  // [effective_context][t][v], row-major

    std::size_t effective_contexts() const {
        return mode == ContextMode::question ? n_question_contexts
                                             : n_question_contexts * vocab_size;
    }
    std::size_t effective_context(std::size_t question, TokenId prev) const {
        return mode == ContextMode::question
                   ? question
                   : question * vocab_size + static_cast<std::size_t>(prev);
    }
    std::size_t index(std::size_t ctx, std::size_t t, std::size_t v) const {
        return (ctx * t_max + t) * vocab_size + v;
    }
    double* row(std::size_t ctx, std::size_t t) { return logits.data() + index(ctx, t, 0); }
    const double* row(std::size_t ctx, std::size_t t) const {
        return logits.data() + index(ctx, t, 0);
    }
    bool same_shape(const PolicyParams& o) const {
        return vocab_size == o.vocab_size && t_max == o.t_max &&
               n_question_contexts == o.n_question_contexts && mode == o.mode;
    }
};

PolicyParams make_policy(std::size_t vocab_size, std::size_t t_max,
                         std::size_t n_question_contexts, ContextMode mode,
                         double init_logit = 0.0);

// Throws std::invalid_argument on non-finite entries or size mismatch.
void validate_policy(const PolicyParams& params);

struct Response {
    std::vector<TokenId> token_ids;    // includes eos unless truncated
    std::string text;                  // space-joined tokens, eos omitted
    std::vector<double> logprobs_old;  // per-token log-probs at sampling time
    bool truncated = false;            // true iff no eos before t_max
    std::optional<char> parsed_answer; // filled by the reward scorer
};

// Stable softmax / log-softmax over one logits row.
std::vector<double> softmax_row(const double* logits, std::size_t n);
std::vector<double> log_softmax_row(const double* logits, std::size_t n);

// Draw `group_size` responses token by token under `params`.
std::vector<Response> sample(const PolicyParams& params, const Vocabulary& vocab,
                             std::size_t question, std::size_t group_size, Rng& rng);

// Per-token log-probabilities of a given token sequence.
std::vector<double> logprob(const PolicyParams& params, std::size_t question,
                            const std::vector<TokenId>& token_ids);

// Gradient of logprob entry `t` with respect to the logits row it reads:
// d logpi(v*) / d logits[v] = 1{v == v*} - softmax(logits)[v]. The gradient
// is zero for every other (context, position) row; `ctx_out` receives the
// effective context of the touched row.
std::vector<double> logprob_grad_row(const PolicyParams& params, std::size_t question,
                                     const std::vector<TokenId>& token_ids, std::size_t t,
                                     std::size_t* ctx_out = nullptr);

// grad += coeff * d logpi(token_ids[t]) / d logits, accumulated sparsely into
// a flat buffer shaped like params.logits.
void accumulate_logprob_grad(const PolicyParams& params, std::size_t question,
                             const std::vector<TokenId>& token_ids, std::size_t t,
                             double coeff, std::vector<double>& grad);

// Flat binary checkpoint: header (vocab size, t_max, question contexts,
// context mode) then row-major logits. Load round-trips bit-exactly.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

} // namespace grpolab
