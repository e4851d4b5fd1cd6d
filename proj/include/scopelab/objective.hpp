#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scopelab/policy.hpp"
#include "scopelab/rng.hpp"
#include "scopelab/trajectory.hpp"

namespace scopelab {

/// How the shaping weight on off-policy tokens enters the gradient.
///  kDetached: w is a stop-gradient coefficient (weighted log-likelihood).
///  kFull:     w(p) is differentiated through p as well.
enum class ShapingGrad { kDetached, kFull };

struct ObjectiveConfig {
    double clip_epsilon = 0.2;
    double rho = 1.0;            // weight of the off-policy suffix term
    double gamma = 1.0;          // shaping constant in p / (p + gamma)
    double advantage_epsilon = 1e-8;
    ShapingGrad shaping_grad = ShapingGrad::kDetached;

    void validate() const;
};

using AdvantageVector = std::vector<double>;

/// (R_i - mean) / (std + guard) with the population standard deviation.
AdvantageVector group_advantages(const std::vector<double>& rewards, double guard);
AdvantageVector group_advantages(const RolloutGroup& group, double guard);

double importance_ratio(const PolicyParams& params, const PolicySnapshot& snapshot, const Context& ctx,
                        Token token);

/// min(r A, clamp(r, 1-eps, 1+eps) A).
double clip_term(double ratio, double advantage, double epsilon);

/// True when the unclipped branch r*A attains the minimum (ties included).
bool clip_uses_ratio(double ratio, double advantage, double epsilon);

/// p / (p + gamma).
double shaping_weight(double p, double gamma);

struct ObjectiveResult {
    double value = 0.0;
    std::vector<double> gradient;  // same layout as PolicyParams::logits()
};

/// Hybrid clipped-surrogate / weighted-likelihood objective averaged over the
/// group members. For rollout i with T tokens and advantage A_i:
///
///   J_i = 1/T [ sum_{mask=0} CLIP(r_t, A_i, eps) + rho sum_{mask=1} w(p_t) log p_t A_i ]
///
/// Plain rollouts carry an all-zero mask and reduce to the GRPO member term.
/// `shaping_reference` supplies p_t inside w for the detached mode; it defaults
/// to `params` itself.
ObjectiveResult scope_objective(const RolloutGroup& group, const AdvantageVector& advantages,
                                const PolicyParams& params, const PolicySnapshot& snapshot,
                                const ObjectiveConfig& cfg, const PolicyParams* shaping_reference = nullptr);

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_near_kink = 0;
};

/// Central differences of scope_objective on a random subset of at least
/// `min_coords` active logits (all of them if fewer exist). Coordinates whose
/// rows feed an importance ratio within 10*h of a clip boundary are skipped.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport finite_difference_check(const PolicyParams& params, const PolicySnapshot& snapshot,
                                        const RolloutGroup& group, const AdvantageVector& advantages,
                                        const ObjectiveConfig& cfg, double h, Rng& rng,
                                        std::size_t min_coords = 50);

struct RandomizedGradCheck {
    std::size_t instances = 0;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_near_kink = 0;
};

/// finite_difference_check on `instances` random (params, snapshot, group)
/// triples. Each group mixes plain rollouts with prefix/suffix-masked ones and
/// carries random binary rewards; the snapshot is a perturbed copy of the
/// parameters so that some ratios land in the clipped region.
RandomizedGradCheck randomized_gradient_check(std::size_t instances, double h, std::uint64_t seed,
                                              const ObjectiveConfig& cfg = {});

}  // namespace scopelab
