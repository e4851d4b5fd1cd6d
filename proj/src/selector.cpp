#include "scopelab/selector.hpp"

#include <cmath>
#include <stdexcept>

namespace scopelab {

bool gate(const RolloutGroup& group) { return group.failure_count() >= 2; }

namespace {

void mean_std(const std::vector<std::size_t>& xs, double& mean, double& sd) {
    if (xs.empty()) throw std::invalid_argument("batch_stats: empty group");
    double sum = 0.0;
    for (std::size_t x : xs) sum += static_cast<double>(x);
    mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (std::size_t x : xs) {
        const double d = static_cast<double>(x) - mean;
        ss += d * d;
    }
    sd = std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace

BatchStats batch_stats(const std::vector<std::size_t>& step_counts, const std::vector<std::size_t>& token_counts) {
    BatchStats s;
    mean_std(step_counts, s.mean_steps, s.std_steps);
    mean_std(token_counts, s.mean_tokens, s.std_tokens);
    return s;
}

BatchStats batch_stats(const RolloutGroup& group) {
    std::vector<std::size_t> m, l;
    for (const Rollout& o : group.rollouts) {
        m.push_back(o.step_count());
        l.push_back(o.token_count());
    }
    return batch_stats(m, l);
}

double gaussian_weight(double x, double mean, double std) {
    if (std < 0.0) throw std::invalid_argument("gaussian_weight: negative standard deviation");
    if (std == 0.0) return x == mean ? 1.0 : 0.0;
    const double z = (x - mean) / std;
    return std::exp(-0.5 * z * z);
}

SelectionScore selection_score(std::size_t steps, std::size_t tokens, const VerifiedPrefix& prefix,
                               const BatchStats& stats) {
    if (steps == 0 || tokens == 0) throw std::invalid_argument("selection_score: empty rollout");
    SelectionScore s;
    s.r_step = static_cast<double>(prefix.k) / static_cast<double>(steps);
    s.r_token = static_cast<double>(prefix.c) / static_cast<double>(tokens);
    s.alpha = gaussian_weight(static_cast<double>(steps), stats.mean_steps, stats.std_steps);
    s.beta = gaussian_weight(static_cast<double>(tokens), stats.mean_tokens, stats.std_tokens);
    s.score = s.alpha * s.beta * (s.r_step + s.r_token);
    return s;
}

SelectionScore selection_score(const Rollout& rollout, const VerifiedPrefix& prefix, const BatchStats& stats) {
    return selection_score(rollout.step_count(), rollout.token_count(), prefix, stats);
}

std::optional<Selection> select_candidate(const RolloutGroup& group,
                                          const std::vector<std::optional<VerifiedPrefix>>& prefixes,
                                          const BatchStats& stats) {
    if (!gate(group)) return std::nullopt;
    if (prefixes.size() != group.size()) throw std::invalid_argument("select_candidate: prefix count mismatch");
    Selection sel;
    sel.scores.resize(group.size());
    bool found = false;
    double best = 0.0;
    for (std::size_t i = 0; i < group.size(); ++i) {
        const Rollout& o = group.rollouts[i];
        if (o.reward != 0) continue;
        if (!prefixes[i]) throw std::invalid_argument("select_candidate: missing prefix for a failing rollout");
        // Rollouts without any step (e.g. a lone delimiter) make no progress.
        const SelectionScore s = o.step_count() == 0 ? SelectionScore{}
                                                     : selection_score(o, *prefixes[i], stats);
        sel.scores[i] = s;
        if (!found || s.score > best) {
            found = true;
            best = s.score;
            sel.index = i;
        }
    }
    return sel;
}

}  // namespace scopelab
