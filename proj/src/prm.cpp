#include "scopelab/prm.hpp"

#include <stdexcept>

namespace scopelab {

std::size_t prefix_token_count(const TokenSeq& tokens, std::size_t k) {
    if (k == 0) return 0;
    std::size_t seen = 0;
    bool in_step = false;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] == kDelimiter) {
            if (in_step && ++seen == k) {
                // Step k closed here; keep the delimiter only if a later step exists.
                for (std::size_t u = t + 1; u < tokens.size(); ++u)
                    if (tokens[u] != kDelimiter) return t + 1;
                return t;
            }
            in_step = false;
        } else {
            in_step = true;
        }
    }
    if (in_step && seen + 1 == k) return tokens.size();
    throw std::invalid_argument("prefix_token_count: fewer than k steps");
}

VerifiedPrefix verified_prefix(const StepScores& scores, const TokenSeq& tokens) {
    const std::vector<Step> steps = segment_steps(tokens);
    if (scores.scores.size() != steps.size())
        throw std::invalid_argument("verified_prefix: score count does not match step count");
    if (!(scores.tau > 0.0 && scores.tau < 1.0)) throw std::invalid_argument("verified_prefix: tau outside (0, 1)");
    VerifiedPrefix p;
    p.m_total = steps.size();
    while (p.k < steps.size() && scores.scores[p.k] >= scores.tau) ++p.k;
    p.steps.assign(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(p.k));
    p.c = prefix_token_count(tokens, p.k);
    return p;
}

VerifiedPrefix verified_prefix(const StepScores& scores, const Rollout& rollout) {
    return verified_prefix(scores, rollout.tokens);
}

double keep_ratio(const VerifiedPrefix& prefix) {
    if (prefix.m_total == 0) throw std::invalid_argument("keep_ratio: rollout has no steps");
    return static_cast<double>(prefix.k) / static_cast<double>(prefix.m_total);
}

}  // namespace scopelab
