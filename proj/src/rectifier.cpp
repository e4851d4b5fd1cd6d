#include "scopelab/rectifier.hpp"

#include <stdexcept>

namespace scopelab {

RectifiedRollout rectify(const ChainTask& task, const Rollout& source, std::size_t source_index,
                         const VerifiedPrefix& prefix, const Refiner& refiner, const PolicyParams& snapshot) {
    const Refinement ref = refiner(task, prefix.steps);
    if (ref.kept > prefix.k) throw std::logic_error("rectify: refiner kept more steps than were verified");
    if (ref.continuation.empty() && ref.kept < task.depth)
        throw std::runtime_error("rectify: refiner returned an empty suffix for an unfinished chain");

    RectifiedRollout out;
    out.source_index = source_index;
    out.kept_steps = ref.kept;
    const std::size_t c = ref.kept == prefix.k ? prefix.c : prefix_token_count(source.tokens, ref.kept);
    out.prefix_tokens = c;

    Rollout& r = out.rollout;
    r.prompt_id = source.prompt_id;
    r.cue = source.cue;
    r.tokens.assign(source.tokens.begin(), source.tokens.begin() + static_cast<std::ptrdiff_t>(c));
    if (!ref.continuation.empty()) {
        if (c > 0 && r.tokens.back() != kDelimiter) r.tokens.push_back(kDelimiter);
        const TokenSeq suffix = join_steps(ref.continuation);
        r.tokens.insert(r.tokens.end(), suffix.begin(), suffix.end());
    }
    out.suffix_tokens = r.tokens.size() - c;
    r.mask = OriginMask(c, out.suffix_tokens);

    r.logprobs.assign(source.logprobs.begin(), source.logprobs.begin() + static_cast<std::ptrdiff_t>(c));
    const std::vector<double> lp = sequence_logprobs(snapshot, r.cue, r.tokens);
    r.logprobs.insert(r.logprobs.end(), lp.begin() + static_cast<std::ptrdiff_t>(c), lp.end());
    r.reward = verify(task, r.tokens);
    return out;
}

RolloutGroup merge_into_group(RolloutGroup group, const std::optional<RectifiedRollout>& rectified,
                              MergeMode mode) {
    if (!rectified) return group;
    if (rectified->source_index >= group.size()) throw std::out_of_range("merge_into_group: bad source index");
    if (mode == MergeMode::kReplace) group.rollouts[rectified->source_index] = rectified->rollout;
    else group.rollouts.push_back(rectified->rollout);
    return group;
}

}  // namespace scopelab
