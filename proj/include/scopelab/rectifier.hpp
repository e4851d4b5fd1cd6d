#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "scopelab/env.hpp"
#include "scopelab/policy.hpp"
#include "scopelab/prm.hpp"
#include "scopelab/trajectory.hpp"

namespace scopelab {

using Refiner = std::function<Refinement(const ChainTask&, const std::vector<Step>&)>;

struct RectifiedRollout {
    std::size_t source_index = 0;
    std::size_t kept_steps = 0;     // steps recycled from the source
    std::size_t prefix_tokens = 0;  // c: tokens [0, c) copied from the source
    std::size_t suffix_tokens = 0;
    Rollout rollout;                // mask 0 on [0, c), 1 on [c, T); reward re-verified
};

/// Mixed trajectory: the source's verified prefix followed by the refiner's
/// continuation. Prefix log-probabilities are copied from the source; suffix
/// ones are evaluated under `snapshot` for bookkeeping.
RectifiedRollout rectify(const ChainTask& task, const Rollout& source, std::size_t source_index,
                         const VerifiedPrefix& prefix, const Refiner& refiner, const PolicyParams& snapshot);

enum class MergeMode { kReplace, kAppend };

/// Puts the rectified rollout into the group (in place of its source by default).
RolloutGroup merge_into_group(RolloutGroup group, const std::optional<RectifiedRollout>& rectified,
                              MergeMode mode = MergeMode::kReplace);

}  // namespace scopelab
