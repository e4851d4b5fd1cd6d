#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "scopelab/prm.hpp"
#include "scopelab/trajectory.hpp"

namespace scopelab {

// Distribution-aware choice of the failing rollout to rectify. Progress is
// measured as verified steps and verified tokens relative to the rollout's own
// length; both are damped by Gaussian weights on how far the rollout's step
// and token counts sit from the group's mean.

struct BatchStats {
    double mean_steps = 0.0;
    double std_steps = 0.0;
    double mean_tokens = 0.0;
    double std_tokens = 0.0;
};

struct SelectionScore {
    double r_step = 0.0;
    double r_token = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double score = 0.0;
};

/// True iff at least two members have reward 0.
bool gate(const RolloutGroup& group);

/// Population mean / standard deviation of step and token counts over all members.
BatchStats batch_stats(const RolloutGroup& group);
BatchStats batch_stats(const std::vector<std::size_t>& step_counts, const std::vector<std::size_t>& token_counts);

/// exp(-(x-mean)^2 / (2 std^2)); for std == 0 the limit: 1 at the mean, else 0.
double gaussian_weight(double x, double mean, double std);

SelectionScore selection_score(std::size_t steps, std::size_t tokens, const VerifiedPrefix& prefix,
                               const BatchStats& stats);
SelectionScore selection_score(const Rollout& rollout, const VerifiedPrefix& prefix, const BatchStats& stats);

struct Selection {
    std::size_t index = 0;
    std::vector<std::optional<SelectionScore>> scores;  // set for failing members only
};

/// Argmax of the selection score over failing members, lowest index on ties.
/// `prefixes[i]` must be set for every failing member. Empty when the gate is closed.
std::optional<Selection> select_candidate(const RolloutGroup& group,
                                          const std::vector<std::optional<VerifiedPrefix>>& prefixes,
                                          const BatchStats& stats);

}  // namespace scopelab
