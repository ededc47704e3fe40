#include "grpolab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace grpolab {

namespace {

constexpr char kMagic[4] = {'G', 'P', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

void check_token_range(const PolicyParams& params, const std::vector<TokenId>& ids) {
    if (ids.size() > params.t_max)
        throw std::invalid_argument("token sequence longer than t_max");
    for (TokenId id : ids)
        if (static_cast<std::size_t>(id) >= params.vocab_size)
            throw std::invalid_argument("token id out of range");
}

// Effective context for position t of a partially built sequence. The
// previous token of position 0 is eos by convention; eos never occurs
// mid-sequence, so the encoding is collision-free.
std::size_t context_at(const PolicyParams& params, const Vocabulary* vocab, TokenId eos_id,
                       std::size_t question, const std::vector<TokenId>& prefix, std::size_t t) {
    (void)vocab;
    if (params.mode == ContextMode::question) return params.effective_context(question, 0);
    TokenId prev = (t == 0) ? eos_id : prefix[t - 1];
    return params.effective_context(question, prev);
}

} // namespace

PolicyParams make_policy(std::size_t vocab_size, std::size_t t_max,
                         std::size_t n_question_contexts, ContextMode mode, double init_logit) {
    if (vocab_size == 0 || t_max == 0 || n_question_contexts == 0)
        throw std::invalid_argument("make_policy: zero-sized dimension");
    PolicyParams p;
    p.vocab_size = vocab_size;
    p.t_max = t_max;
    p.n_question_contexts = n_question_contexts;
    p.mode = mode;
    p.logits.assign(p.effective_contexts() * t_max * vocab_size, init_logit);
    return p;
}

void validate_policy(const PolicyParams& params) {
    const std::size_t expect = params.effective_contexts() * params.t_max * params.vocab_size;
    if (params.logits.size() != expect)
        throw std::invalid_argument("policy logits size does not match shape");
    for (double x : params.logits)
        if (!std::isfinite(x)) throw std::invalid_argument("policy logits contain non-finite entry");
}

std::vector<double> softmax_row(const double* logits, std::size_t n) {
    double mx = logits[0];
    for (std::size_t v = 1; v < n; ++v) mx = std::max(mx, logits[v]);
    std::vector<double> p(n);
    double sum = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        p[v] = std::exp(logits[v] - mx);
        sum += p[v];
    }
    for (std::size_t v = 0; v < n; ++v) p[v] /= sum;
    return p;
}

std::vector<double> log_softmax_row(const double* logits, std::size_t n) {
    double mx = logits[0];
    for (std::size_t v = 1; v < n; ++v) mx = std::max(mx, logits[v]);
    double sum = 0.0;
    for (std::size_t v = 0; v < n; ++v) sum += std::exp(logits[v] - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> lp(n);
    for (std::size_t v = 0; v < n; ++v) lp[v] = logits[v] - lse;
    return lp;
}

std::vector<Response> sample(const PolicyParams& params, const Vocabulary& vocab,
                             std::size_t question, std::size_t group_size, Rng& rng) {
    if (group_size < 1) throw std::invalid_argument("sample: group_size must be >= 1");
    if (question >= params.n_question_contexts)
        throw std::invalid_argument("sample: question context out of range");
    if (vocab.size() != params.vocab_size)
        throw std::invalid_argument("sample: vocabulary size does not match policy");
    // logprob() encodes the t=0 previous token as the last vocab id; the
    // sampler must agree, and make_vocabulary always puts eos there.
    if (params.mode == ContextMode::question_and_prev &&
        vocab.eos_id != static_cast<TokenId>(params.vocab_size - 1))
        throw std::invalid_argument("sample: eos must be the last vocabulary id");

    std::vector<Response> group;
    group.reserve(group_size);
    for (std::size_t g = 0; g < group_size; ++g) {
        Response r;
        for (std::size_t t = 0; t < params.t_max; ++t) {
            const std::size_t ctx =
                context_at(params, &vocab, vocab.eos_id, question, r.token_ids, t);
            const std::vector<double> probs = softmax_row(params.row(ctx, t), params.vocab_size);
            const TokenId tok = static_cast<TokenId>(sample_categorical(probs, rng));
            const std::vector<double> lp = log_softmax_row(params.row(ctx, t), params.vocab_size);
            r.token_ids.push_back(tok);
            r.logprobs_old.push_back(lp[tok]);
            if (tok == vocab.eos_id) break;
        }
        r.truncated = r.token_ids.empty() || r.token_ids.back() != vocab.eos_id;
        r.text = render(r.token_ids, vocab);
        group.push_back(std::move(r));
    }
    return group;
}

std::vector<double> logprob(const PolicyParams& params, std::size_t question,
                            const std::vector<TokenId>& token_ids) {
    check_token_range(params, token_ids);
    // eos convention for the t=0 previous token: the last vocab id. This
    // matches make_vocabulary, which always places <eos> last.
    const TokenId eos_id = static_cast<TokenId>(params.vocab_size - 1);
    std::vector<double> out(token_ids.size());
    for (std::size_t t = 0; t < token_ids.size(); ++t) {
        const std::size_t ctx = context_at(params, nullptr, eos_id, question, token_ids, t);
        const std::vector<double> lp = log_softmax_row(params.row(ctx, t), params.vocab_size);
        out[t] = lp[token_ids[t]];
    }
    return out;
}

std::vector<double> logprob_grad_row(const PolicyParams& params, std::size_t question,
                                     const std::vector<TokenId>& token_ids, std::size_t t,
                                     std::size_t* ctx_out) {
    check_token_range(params, token_ids);
    if (t >= token_ids.size()) throw std::invalid_argument("logprob_grad_row: position out of range");
    const TokenId eos_id = static_cast<TokenId>(params.vocab_size - 1);
    const std::size_t ctx = context_at(params, nullptr, eos_id, question, token_ids, t);
    if (ctx_out) *ctx_out = ctx;
    std::vector<double> g = softmax_row(params.row(ctx, t), params.vocab_size);
    for (double& x : g) x = -x;
    g[token_ids[t]] += 1.0;
    return g;
}

void accumulate_logprob_grad(const PolicyParams& params, std::size_t question,
                             const std::vector<TokenId>& token_ids, std::size_t t,
                             double coeff, std::vector<double>& grad) {
    if (grad.size() != params.logits.size())
        throw std::invalid_argument("accumulate_logprob_grad: gradient buffer shape mismatch");
    std::size_t ctx = 0;
    const std::vector<double> row = logprob_grad_row(params, question, token_ids, t, &ctx);
    double* dst = grad.data() + params.index(ctx, t, 0);
    for (std::size_t v = 0; v < params.vocab_size; ++v) dst[v] += coeff * row[v];
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 4);
    const std::uint32_t header[5] = {
        kVersion,
        static_cast<std::uint32_t>(params.vocab_size),
        static_cast<std::uint32_t>(params.t_max),
        static_cast<std::uint32_t>(params.n_question_contexts),
        static_cast<std::uint32_t>(params.mode),
    };
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(params.logits.data()),
              static_cast<std::streamsize>(params.logits.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    std::uint32_t header[5];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: bad header in " + path);
    if (header[0] != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);
    PolicyParams p;
    p.vocab_size = header[1];
    p.t_max = header[2];
    p.n_question_contexts = header[3];
    p.mode = static_cast<ContextMode>(header[4]);
    p.logits.resize(p.effective_contexts() * p.t_max * p.vocab_size);
    in.read(reinterpret_cast<char*>(p.logits.data()),
            static_cast<std::streamsize>(p.logits.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated logits in " + path);
    return p;
}

} // namespace grpolab
