#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace scopelab {

using Token = std::uint16_t;

// Reserved ids. Every vocabulary starts with these two; content tokens follow.
inline constexpr Token kDelimiter = 0;
inline constexpr Token kAnswerMarker = 1;
inline constexpr Token kFirstContentToken = 2;

using Step = std::vector<Token>;
using TokenSeq = std::vector<Token>;

/// Splits a token stream on delimiter tokens. Empty segments (leading,
/// repeated or trailing delimiters) are dropped.
std::vector<Step> segment_steps(const TokenSeq& tokens);

/// Delimiter-joined flattening of `steps`. Throws std::invalid_argument if a
/// step is empty or contains the delimiter.
TokenSeq join_steps(const std::vector<Step>& steps);

/// Token count of join_steps(steps) without building it.
std::size_t joined_length(const std::vector<Step>& steps);

/// Per-token origin flags: 0 = recycled on-policy token, 1 = refined
/// off-policy token. All zeros precede all ones.
class OriginMask {
public:
    OriginMask() = default;
    /// `on_policy` leading zeros followed by `off_policy` ones.
    OriginMask(std::size_t on_policy, std::size_t off_policy);
    static OriginMask on_policy(std::size_t length) { return {length, 0}; }

    std::size_t size() const { return flags_.size(); }
    std::size_t boundary() const { return boundary_; }
    std::uint8_t operator[](std::size_t t) const { return flags_[t]; }
    const std::vector<std::uint8_t>& flags() const { return flags_; }

    /// Validates an arbitrary flag vector; throws if it is not a step function.
    static OriginMask from_flags(std::vector<std::uint8_t> flags);

private:
    std::vector<std::uint8_t> flags_;
    std::size_t boundary_ = 0;
};

struct Rollout {
    std::string prompt_id;
    Token cue = kFirstContentToken;  // context token the task conditions generation on
    TokenSeq tokens;
    std::vector<double> logprobs;    // under the sampling-time snapshot
    int reward = 0;
    OriginMask mask;                 // all zero unless the rollout was rectified

    std::vector<Step> steps() const { return segment_steps(tokens); }
    std::size_t step_count() const { return steps().size(); }
    std::size_t token_count() const { return tokens.size(); }

    /// Throws std::invalid_argument when an invariant is broken.
    void validate(std::size_t vocab_size) const;
};

struct RolloutGroup {
    std::string prompt_id;
    std::vector<Rollout> rollouts;

    std::size_t size() const { return rollouts.size(); }
    std::vector<int> rewards() const;
    std::size_t failure_count() const;
    void validate() const;
};

// Line-delimited JSON records, one rollout per line:
// {"prompt_id":..,"cue":..,"tokens":[..],"steps":[[b,e],..],"reward":0|1,"logprobs":[..]}
std::string rollout_to_json_line(const Rollout& rollout);
Rollout rollout_from_json_line(const std::string& line);
void write_rollouts_jsonl(std::ostream& out, const std::vector<Rollout>& rollouts);
std::vector<Rollout> read_rollouts_jsonl(std::istream& in);

}  // namespace scopelab
