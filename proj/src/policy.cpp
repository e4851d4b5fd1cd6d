#include "scopelab/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace scopelab {

std::vector<Context> contexts_for(Token cue, const TokenSeq& tokens) {
    std::vector<Context> out;
    out.reserve(tokens.size());
    Token prev = cue;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        out.push_back({t, prev});
        if (tokens[t] != kDelimiter) prev = tokens[t];
    }
    return out;
}

PolicyParams::PolicyParams(std::size_t max_positions, std::size_t vocab_size, double temperature)
    : max_positions_(max_positions),
      vocab_size_(vocab_size),
      temperature_(temperature),
      logits_(max_positions * vocab_size * vocab_size, 0.0) {
    if (max_positions == 0 || vocab_size < 2) throw std::invalid_argument("policy: empty shape");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("policy: temperature must be positive");
}

std::size_t PolicyParams::row_offset(const Context& ctx) const {
    if (ctx.position >= max_positions_) throw std::out_of_range("policy: position out of range");
    if (ctx.prev >= vocab_size_) throw std::out_of_range("policy: previous token out of range");
    return (ctx.position * vocab_size_ + ctx.prev) * vocab_size_;
}

std::span<const double> PolicyParams::row(const Context& ctx) const {
    return std::span<const double>(logits_).subspan(row_offset(ctx), vocab_size_);
}

std::span<double> PolicyParams::row(const Context& ctx) {
    return std::span<double>(logits_).subspan(row_offset(ctx), vocab_size_);
}

void PolicyParams::row_log_probs(const Context& ctx, std::span<double> out) const {
    const auto r = row(ctx);
    const double inv_t = 1.0 / temperature_;
    double hi = -INFINITY;
    for (double z : r) hi = std::max(hi, z * inv_t);
    double sum = 0.0;
    for (double z : r) sum += std::exp(z * inv_t - hi);
    const double lse = hi + std::log(sum);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] = r[j] * inv_t - lse;
}

double logprob(const PolicyParams& params, const Context& ctx, Token token) {
    if (token >= params.vocab_size()) throw std::out_of_range("logprob: token out of range");
    std::vector<double> lp(params.vocab_size());
    params.row_log_probs(ctx, lp);
    return lp[token];
}

double token_entropy(const PolicyParams& params, const Context& ctx) {
    std::vector<double> lp(params.vocab_size());
    params.row_log_probs(ctx, lp);
    double h = 0.0;
    for (double l : lp) {
        const double p = std::exp(l);
        if (p > 0.0) h -= p * l;
    }
    return h;
}

double mean_policy_entropy(const PolicyParams& params, const Rollout& rollout) {
    if (rollout.tokens.empty()) return 0.0;
    double sum = 0.0;
    for (const Context& ctx : contexts_for(rollout.cue, rollout.tokens)) sum += token_entropy(params, ctx);
    return sum / static_cast<double>(rollout.tokens.size());
}

RowGradient grad_logprob(const PolicyParams& params, const Context& ctx, Token token) {
    if (token >= params.vocab_size()) throw std::out_of_range("grad_logprob: token out of range");
    RowGradient g;
    g.offset = params.row_offset(ctx);
    g.values.resize(params.vocab_size());
    params.row_log_probs(ctx, g.values);
    const double inv_t = 1.0 / params.temperature();
    for (std::size_t j = 0; j < g.values.size(); ++j) {
        const double indicator = j == token ? 1.0 : 0.0;
        g.values[j] = (indicator - std::exp(g.values[j])) * inv_t;
    }
    return g;
}

Rollout sample_rollout(const PolicyParams& params, const std::string& prompt_id, Token cue,
                       std::size_t max_tokens, Rng& rng) {
    if (max_tokens < 1) throw std::invalid_argument("sample_rollout: max_tokens must be >= 1");
    if (max_tokens > params.max_positions())
        throw std::invalid_argument("sample_rollout: max_tokens exceeds the policy's position range");
    Rollout r;
    r.prompt_id = prompt_id;
    r.cue = cue;
    std::vector<double> lp(params.vocab_size());
    std::vector<double> prob(params.vocab_size());
    Token prev = cue;
    for (std::size_t t = 0; t < max_tokens; ++t) {
        params.row_log_probs({t, prev}, lp);
        for (std::size_t j = 0; j < lp.size(); ++j) prob[j] = std::exp(lp[j]);
        const auto tok = static_cast<Token>(rng.categorical(prob));
        r.tokens.push_back(tok);
        r.logprobs.push_back(lp[tok]);
        if (tok == kAnswerMarker) break;
        if (tok != kDelimiter) prev = tok;
    }
    r.mask = OriginMask::on_policy(r.tokens.size());
    return r;
}

std::vector<double> sequence_logprobs(const PolicyParams& params, Token cue, const TokenSeq& tokens) {
    std::vector<double> out;
    out.reserve(tokens.size());
    std::vector<double> lp(params.vocab_size());
    const auto ctxs = contexts_for(cue, tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        params.row_log_probs(ctxs[t], lp);
        out.push_back(lp[tokens[t]]);
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'S', 'C', 'P', 'L', 'P', 'O', 'L', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const PolicyParams& params) {
    out.write(kMagic, sizeof kMagic);
    put_u64(out, params.max_positions());
    put_u64(out, params.vocab_size());
    put_u64(out, std::bit_cast<std::uint64_t>(params.temperature()));
    for (double z : params.logits()) put_u64(out, std::bit_cast<std::uint64_t>(z));
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

PolicyParams read_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    const auto positions = get_u64(in);
    const auto vocab = get_u64(in);
    const double temperature = std::bit_cast<double>(get_u64(in));
    if (positions == 0 || vocab < 2 || positions * vocab * vocab > (std::uint64_t{1} << 32))
        throw std::runtime_error("checkpoint: implausible shape");
    PolicyParams p(positions, vocab, temperature);
    for (double& z : p.logits()) {
        z = std::bit_cast<double>(get_u64(in));
        if (!std::isfinite(z)) throw std::runtime_error("checkpoint: non-finite logit");
    }
    return p;
}

}  // namespace scopelab
