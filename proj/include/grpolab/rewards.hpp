#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grpolab/vocab.hpp"

namespace grpolab {

struct RewardWeights {
    double w_cls = 3.0;
    double w_fmt = 1.0;
    double w_cos = 1.0;
    double w_rep = 1.0;
};

// Length schedule for the cosine reward. Correct answers score higher when
// the think span is short; wrong-but-valid answers score higher when it is
// long.
struct CosineSchedule {
    std::size_t l_max = 16;
    double r_correct_at_0 = 1.0;
    double r_correct_at_lmax = 0.0;
    double r_wrong_at_0 = -0.5;
    double r_wrong_at_lmax = 0.0;
};

struct RewardBreakdown {
    int format = 0;           // {0, 1}
    int classification = 0;   // {-1, 0, 1}
    double cosine = 0.0;      // [-1, 1]
    double repetition = 0.0;  // [-1, 0]
    double total = 0.0;
};

enum class AnswerOutcome { correct, wrong_valid, invalid };

// Single letter inside the first well-formed <answer>...</answer> span,
// provided the trimmed content is exactly one option letter (A..I).
std::optional<char> parse_answer(const std::string& text);

// 1 iff the text is exactly one <think> span followed by one <answer> span
// with nothing but whitespace outside them.
int format_reward(const std::string& text);

// 1 correct, 0 valid-but-wrong, -1 invalid (absent or outside the options).
int classification_reward(std::optional<char> parsed, char gold, std::size_t n_options);

// Half-cosine interpolation between the schedule endpoints over think length
// L in [0, l_max]; invalid answers score -1 regardless of L.
double cosine_reward(AnswerOutcome outcome, std::size_t think_len, const CosineSchedule& sched);

// Negative repeated-n-gram fraction: 0 when all n-grams are distinct or the
// sequence is shorter than n.
double repetition_reward(const std::vector<TokenId>& token_ids, std::size_t ngram_n);

// Token count strictly inside the first think span; 0 when the tags are
// missing or out of order.
std::size_t think_token_count(const std::vector<TokenId>& token_ids, const Vocabulary& vocab);

struct Response; // policy.hpp

// Bundles the weights, schedule and n-gram order so all four components are
// computed consistently for one response.
class RewardScorer {
public:
    RewardScorer(const Vocabulary& vocab, RewardWeights weights = {}, CosineSchedule sched = {},
                 std::size_t ngram_n = 3)
        : vocab_(&vocab), weights_(weights), sched_(sched), ngram_n_(ngram_n) {}

    RewardBreakdown score(const std::string& text, const std::vector<TokenId>& token_ids,
                          char gold, std::size_t n_options) const;

    // Convenience: scores r.text / r.token_ids and fills r.parsed_answer.
    RewardBreakdown score_response(Response& r, char gold, std::size_t n_options) const;

    const RewardWeights& weights() const { return weights_; }
    const CosineSchedule& schedule() const { return sched_; }
    std::size_t ngram_n() const { return ngram_n_; }

private:
    const Vocabulary* vocab_;
    RewardWeights weights_;
    CosineSchedule sched_;
    std::size_t ngram_n_;
};

// One flat JSON object per response for metrics logs.
std::string breakdown_to_json(const RewardBreakdown& b);

} // namespace grpolab
