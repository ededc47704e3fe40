#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace grpolab {

using TokenId = std::uint32_t;

// Fixed toy alphabet: four structural tags, up to nine option letters,
// a small bank of reasoning filler tokens, and one end-of-sequence token.
struct Vocabulary {
    std::vector<std::string> tokens;
    TokenId think_open = 0;
    TokenId think_close = 0;
    TokenId answer_open = 0;
    TokenId answer_close = 0;
    std::vector<TokenId> choice_ids;  // "A".."I" in order
    std::vector<TokenId> filler_ids;
    TokenId eos_id = 0;

    std::size_t size() const { return tokens.size(); }
    const std::string& text(TokenId id) const { return tokens.at(id); }

    bool is_structural(TokenId id) const {
        return id == think_open || id == think_close || id == answer_open || id == answer_close;
    }
    bool is_choice(TokenId id) const;

    // Letter for the i-th option (0 -> 'A').
    static char option_letter(std::size_t index) { return static_cast<char>('A' + index); }

    std::optional<TokenId> lookup(const std::string& token) const;

private:
    friend Vocabulary make_vocabulary(std::size_t n_choices, std::size_t n_fillers);
    std::unordered_map<std::string, TokenId> index_;
};

// n_choices in [2, 9]; n_fillers >= 1. Token order is fixed:
// <think> </think> <answer> </answer>, letters, fillers f1..fN, <eos>.
Vocabulary make_vocabulary(std::size_t n_choices = 9, std::size_t n_fillers = 4);

// Tokens joined by single spaces, eos omitted.
std::string render(const std::vector<TokenId>& ids, const Vocabulary& vocab);

// Inverse of render on its own output. Unknown token -> nullopt.
std::optional<std::vector<TokenId>> tokenize(const std::string& text, const Vocabulary& vocab);

} // namespace grpolab
