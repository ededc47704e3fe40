#include "grpolab/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace grpolab {

bool Vocabulary::is_choice(TokenId id) const {
    for (TokenId c : choice_ids)
        if (c == id) return true;
    return false;
}

std::optional<TokenId> Vocabulary::lookup(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocabulary make_vocabulary(std::size_t n_choices, std::size_t n_fillers) {
    if (n_choices < 2 || n_choices > 9)
        throw std::invalid_argument("make_vocabulary: n_choices must be in [2, 9]");
    if (n_fillers < 1)
        throw std::invalid_argument("make_vocabulary: need at least one filler token");

    Vocabulary v;
    auto add = [&v](const std::string& s) {
        TokenId id = static_cast<TokenId>(v.tokens.size());
        v.tokens.push_back(s);
        v.index_.emplace(s, id);
        return id;
    };

    v.think_open = add("<think>");
    v.think_close = add("</think>");
    v.answer_open = add("<answer>");
    v.answer_close = add("</answer>");
    for (std::size_t i = 0; i < n_choices; ++i)
        v.choice_ids.push_back(add(std::string(1, Vocabulary::option_letter(i))));
    for (std::size_t i = 0; i < n_fillers; ++i)
        v.filler_ids.push_back(add("f" + std::to_string(i + 1)));
    v.eos_id = add("<eos>");
    return v;
}

std::string render(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
    std::string out;
    for (TokenId id : ids) {
        if (id == vocab.eos_id) continue;
        if (!out.empty()) out += ' ';
        out += vocab.text(id);
    }
    return out;
}

std::optional<std::vector<TokenId>> tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<TokenId> ids;
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) {
        auto id = vocab.lookup(tok);
        if (!id) return std::nullopt;
        ids.push_back(*id);
    }
    return ids;
}

} // namespace grpolab
