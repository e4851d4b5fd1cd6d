#pragma once

#include <cstddef>
#include <vector>

#include "scopelab/trajectory.hpp"

namespace scopelab {

struct StepScores {
    std::vector<double> scores;  // one correctness probability per step
    double tau = 0.5;            // validity threshold; a score equal to tau passes
};

struct VerifiedPrefix {
    std::size_t k = 0;          // verified steps
    std::size_t c = 0;          // prefix tokens of the raw stream, incl. the delimiter closing step k
                                // when more steps follow
    std::size_t m_total = 0;    // M, steps in the rollout
    std::vector<Step> steps;    // the first k steps
};

/// Longest leading run of steps whose score is >= tau.
VerifiedPrefix verified_prefix(const StepScores& scores, const Rollout& rollout);
VerifiedPrefix verified_prefix(const StepScores& scores, const TokenSeq& tokens);

/// Length of the raw-token prefix covering the first k steps of `tokens`,
/// including the delimiter that closes step k when another step follows.
std::size_t prefix_token_count(const TokenSeq& tokens, std::size_t k);

/// k / M.
double keep_ratio(const VerifiedPrefix& prefix);

}  // namespace scopelab
