#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "scopelab/rng.hpp"
#include "scopelab/trajectory.hpp"

namespace scopelab {

/// Conditioning context of a next-token distribution: the token position and
/// the previous non-delimiter token (the task cue before any content).
struct Context {
    std::size_t position = 0;
    Token prev = kFirstContentToken;
    friend bool operator==(const Context&, const Context&) = default;
};

/// Contexts of every token of `tokens` when generated after `cue`.
std::vector<Context> contexts_for(Token cue, const TokenSeq& tokens);

/// Tabular position-bigram softmax policy. Logits are stored row-major as
/// [position][prev][next].
class PolicyParams {
public:
    PolicyParams() = default;
    PolicyParams(std::size_t max_positions, std::size_t vocab_size, double temperature = 1.0);

    std::size_t max_positions() const { return max_positions_; }
    std::size_t vocab_size() const { return vocab_size_; }
    double temperature() const { return temperature_; }
    std::size_t size() const { return logits_.size(); }

    /// Offset of the first logit of a context row; throws std::out_of_range.
    std::size_t row_offset(const Context& ctx) const;
    std::span<const double> row(const Context& ctx) const;
    std::span<double> row(const Context& ctx);

    std::span<const double> logits() const { return logits_; }
    std::span<double> logits() { return logits_; }

    /// Log-probabilities of the whole row (tempered log-softmax).
    void row_log_probs(const Context& ctx, std::span<double> out) const;

    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

private:
    std::size_t max_positions_ = 0;
    std::size_t vocab_size_ = 0;
    double temperature_ = 1.0;
    std::vector<double> logits_;
};

/// Frozen copy of the parameters taken at sampling time.
class PolicySnapshot {
public:
    explicit PolicySnapshot(const PolicyParams& params)
        : params_(std::make_shared<const PolicyParams>(params)) {}
    const PolicyParams& params() const { return *params_; }

private:
    std::shared_ptr<const PolicyParams> params_;
};

double logprob(const PolicyParams& params, const Context& ctx, Token token);
double token_entropy(const PolicyParams& params, const Context& ctx);
/// Mean next-token entropy over the contexts of the rollout's emitted tokens.
double mean_policy_entropy(const PolicyParams& params, const Rollout& rollout);

/// d log pi(token | ctx) / d logits, nonzero only on the context row.
struct RowGradient {
    std::size_t offset = 0;      // row_offset(ctx)
    std::vector<double> values;  // length vocab_size
};
RowGradient grad_logprob(const PolicyParams& params, const Context& ctx, Token token);

/// Autoregressive sampling from `params` until the answer marker is emitted or
/// `max_tokens` tokens exist. Reward is left at 0 for the caller to verify.
Rollout sample_rollout(const PolicyParams& params, const std::string& prompt_id, Token cue,
                       std::size_t max_tokens, Rng& rng);

/// Log-probabilities of an existing token sequence under `params`.
std::vector<double> sequence_logprobs(const PolicyParams& params, Token cue, const TokenSeq& tokens);

// Binary checkpoint: magic "SCPLPOL1", u64 max_positions, u64 vocab_size,
// f64 temperature, then the logits; all little-endian.
void write_checkpoint(std::ostream& out, const PolicyParams& params);
PolicyParams read_checkpoint(std::istream& in);

}  // namespace scopelab
