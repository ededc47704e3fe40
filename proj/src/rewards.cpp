#include "grpolab/rewards.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "grpolab/policy.hpp"

namespace grpolab {

namespace {

constexpr const char* kThinkOpen = "<think>";
constexpr const char* kThinkClose = "</think>";
constexpr const char* kAnswerOpen = "<answer>";
constexpr const char* kAnswerClose = "</answer>";

struct TagScan {
    std::size_t count = 0;
    std::size_t first = std::string::npos;
};

TagScan scan_tag(const std::string& text, const std::string& tag) {
    TagScan s;
    std::size_t pos = text.find(tag);
    while (pos != std::string::npos) {
        if (s.count == 0) s.first = pos;
        ++s.count;
        pos = text.find(tag, pos + tag.size());
    }
    return s;
}

bool whitespace_only(const std::string& text, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
        if (!std::isspace(static_cast<unsigned char>(text[i]))) return false;
    return true;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

} // namespace

std::optional<char> parse_answer(const std::string& text) {
    const std::size_t open = text.find(kAnswerOpen);
    if (open == std::string::npos) return std::nullopt;
    const std::size_t content = open + std::string(kAnswerOpen).size();
    const std::size_t close = text.find(kAnswerClose, content);
    if (close == std::string::npos) return std::nullopt;
    const std::string inner = trim(text.substr(content, close - content));
    if (inner.size() != 1) return std::nullopt;
    const char c = inner[0];
    if (c < 'A' || c > 'I') return std::nullopt;
    return c;
}

int format_reward(const std::string& text) {
    const TagScan to = scan_tag(text, kThinkOpen);
    const TagScan tc = scan_tag(text, kThinkClose);
    const TagScan ao = scan_tag(text, kAnswerOpen);
    const TagScan ac = scan_tag(text, kAnswerClose);
    if (to.count != 1 || tc.count != 1 || ao.count != 1 || ac.count != 1) return 0;
    const std::size_t to_end = to.first + std::string(kThinkOpen).size();
    const std::size_t tc_end = tc.first + std::string(kThinkClose).size();
    const std::size_t ac_end = ac.first + std::string(kAnswerClose).size();
    if (!(to_end <= tc.first && tc_end <= ao.first && ao.first < ac.first)) return 0;
    if (!whitespace_only(text, 0, to.first)) return 0;
    if (!whitespace_only(text, tc_end, ao.first)) return 0;
    if (!whitespace_only(text, ac_end, text.size())) return 0;
    return 1;
}

int classification_reward(std::optional<char> parsed, char gold, std::size_t n_options) {
    if (n_options < 2 || n_options > 9)
        throw std::invalid_argument("classification_reward: n_options must be in [2, 9]");
    if (gold < 'A' || gold >= static_cast<char>('A' + n_options))
        throw std::invalid_argument("classification_reward: gold letter outside the options");
    if (!parsed) return -1;
    if (*parsed < 'A' || *parsed >= static_cast<char>('A' + n_options)) return -1;
    return *parsed == gold ? 1 : 0;
}

double cosine_reward(AnswerOutcome outcome, std::size_t think_len, const CosineSchedule& sched) {
    if (sched.l_max == 0) throw std::invalid_argument("cosine_reward: l_max must be positive");
    if (outcome == AnswerOutcome::invalid) return -1.0;
    const double r_start =
        outcome == AnswerOutcome::correct ? sched.r_correct_at_0 : sched.r_wrong_at_0;
    const double r_end =
        outcome == AnswerOutcome::correct ? sched.r_correct_at_lmax : sched.r_wrong_at_lmax;
    const double l = static_cast<double>(std::min(think_len, sched.l_max));
    const double frac = l / static_cast<double>(sched.l_max);
    return r_end + 0.5 * (r_start - r_end) * (1.0 + std::cos(M_PI * frac));
}

double repetition_reward(const std::vector<TokenId>& token_ids, std::size_t ngram_n) {
    if (ngram_n < 1) throw std::invalid_argument("repetition_reward: n must be >= 1");
    if (token_ids.size() < ngram_n) return 0.0;
    const std::size_t total = token_ids.size() - ngram_n + 1;
    std::set<std::vector<TokenId>> distinct;
    for (std::size_t i = 0; i < total; ++i)
        distinct.insert(std::vector<TokenId>(token_ids.begin() + static_cast<std::ptrdiff_t>(i),
                                             token_ids.begin() + static_cast<std::ptrdiff_t>(i + ngram_n)));
    return -(1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total));
}

std::size_t think_token_count(const std::vector<TokenId>& token_ids, const Vocabulary& vocab) {
    std::size_t open = token_ids.size();
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        if (token_ids[i] == vocab.think_open) {
            open = i;
            break;
        }
    }
    if (open == token_ids.size()) return 0;
    for (std::size_t i = open + 1; i < token_ids.size(); ++i)
        if (token_ids[i] == vocab.think_close) return i - open - 1;
    return 0;
}

RewardBreakdown RewardScorer::score(const std::string& text, const std::vector<TokenId>& token_ids,
                                    char gold, std::size_t n_options) const {
    RewardBreakdown b;
    b.format = format_reward(text);
    const std::optional<char> parsed = parse_answer(text);
    b.classification = classification_reward(parsed, gold, n_options);
    const AnswerOutcome outcome = b.classification == 1    ? AnswerOutcome::correct
                                  : b.classification == 0 ? AnswerOutcome::wrong_valid
                                                          : AnswerOutcome::invalid;
    const std::size_t think_len = b.format == 1 ? think_token_count(token_ids, *vocab_) : 0;
    b.cosine = cosine_reward(outcome, think_len, sched_);
    b.repetition = repetition_reward(token_ids, ngram_n_);
    b.total = weights_.w_cls * b.classification + weights_.w_fmt * b.format +
              weights_.w_cos * b.cosine + weights_.w_rep * b.repetition;
    return b;
}

RewardBreakdown RewardScorer::score_response(Response& r, char gold, std::size_t n_options) const {
    r.parsed_answer = parse_answer(r.text);
    return score(r.text, r.token_ids, gold, n_options);
}

std::string breakdown_to_json(const RewardBreakdown& b) {
    nlohmann::json j;
    j["format"] = b.format;
    j["classification"] = b.classification;
    j["cosine"] = b.cosine;
    j["repetition"] = b.repetition;
    j["total"] = b.total;
    return j.dump();
}

} // namespace grpolab
