#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scopelab/env.hpp"
#include "scopelab/metrics.hpp"
#include "scopelab/objective.hpp"
#include "scopelab/policy.hpp"
#include "scopelab/prm.hpp"
#include "scopelab/rectifier.hpp"
#include "scopelab/selector.hpp"

namespace scopelab {

enum class Algorithm { kGrpo, kScope };
enum class Optimizer { kSgd, kAdam };

const char* to_string(Algorithm a);
const char* to_string(Optimizer o);
const char* to_string(MergeMode m);
const char* to_string(ShapingGrad s);

/// Starting point of the policy: a partially competent "pretrained" model.
/// Every logit gets N(0, noise^2); the tokens a correct chain may emit in a
/// context get +grammar_bonus, and one randomly chosen alias of each block
/// gets +habit_bonus on top, so the untrained policy has a favourite phrasing.
struct PriorConfig {
    double grammar_bonus = 3.0;
    double habit_bonus = 1.0;
    double noise = 0.5;
};

struct TrainConfig {
    // environment
    WorldConfig world;
    std::uint64_t world_seed = 1;
    std::size_t bank_size = 200;
    double eta = 0.1;               // PRM corruption level
    std::size_t eval_tasks = 30;    // held-out prompts for the final diversity evaluation
    std::size_t eval_samples = 10;  // K per held-out prompt

    // policy
    double temperature = 1.0;
    std::size_t max_tokens = 24;    // sampling length cap
    PriorConfig prior;

    ObjectiveConfig objective;

    // trainer
    Algorithm algorithm = Algorithm::kScope;
    std::size_t group_size = 8;
    std::size_t tasks_per_update = 32;
    double learning_rate = 0.1;
    std::size_t updates = 300;
    double tau = 0.5;
    std::uint64_t seed = 0;
    bool rectify = true;            // false turns SCOPE's recycling branch off entirely
    MergeMode merge = MergeMode::kReplace;
    std::size_t ppo_epochs = 1;
    Optimizer optimizer = Optimizer::kSgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t workers = 1;        // 1 = single-threaded reference mode

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

PolicyParams initial_policy(const ChainWorld& world, const TrainConfig& cfg);

/// Held-out prompts drawn from the training world with their own ids and seed.
TaskBank heldout_bank(const ChainWorld& world, const TrainConfig& cfg);

struct RunState {
    PolicyParams params;
    std::size_t update = 0;
    std::vector<MetricsRow> metrics;
    // Adam moments (empty under SGD).
    std::vector<double> adam_m, adam_v;
    std::size_t adam_t = 0;
};

RunState initial_state(const TaskBank& bank, const TrainConfig& cfg);

/// Everything the per-group stages produced for one prompt.
struct GroupOutcome {
    RolloutGroup sampled;                           // rewards verified, never modified
    std::vector<std::optional<VerifiedPrefix>> prefixes;  // PRM prefix of each failing member
    std::optional<Selection> selection;
    std::optional<RectifiedRollout> rectified;
    RolloutGroup merged;                            // group used for advantages and the objective
    std::vector<std::string> events;                // JSON lines
};

/// Verification, PRM scoring of failures, and (for SCOPE) gate, selection,
/// rectification and merge on an already-sampled group. `group_index` only
/// labels the events.
GroupOutcome process_group(const ChainTask& task, RolloutGroup sampled, const PolicySnapshot& snapshot,
                           const TrainConfig& cfg, Rng& prm_rng, std::size_t update, std::size_t group_index);

struct StepOutput {
    MetricsRow row;
    std::vector<std::string> events;
};

/// One sampling round and one (or ppo_epochs) ascent steps.
StepOutput train_step(RunState& state, const TaskBank& bank, const TrainConfig& cfg);

struct RunSummary {
    std::size_t rows = 0;
    double final_quartile_reward = 0.0;
    std::optional<double> first_quartile_keep_ratio, final_quartile_keep_ratio;
    std::optional<double> final_near_miss_1;
    std::size_t rectifications = 0;
    // held-out evaluation
    std::optional<Percentiles> eval_distinct_1, eval_distinct_4, eval_one_minus_self_bleu,
        eval_one_minus_self_rouge, eval_div_score;
    double eval_pass_at_1 = 0.0;
    double eval_pass_at_k = 0.0;
};

/// Per-prompt diversity table over sample sets grouped by prompt, in the order given.
struct DiversityTable {
    std::size_t prompts = 0;
    std::size_t samples_per_prompt = 0;
    std::optional<Percentiles> distinct_1, distinct_2, distinct_4, one_minus_self_bleu, one_minus_self_rouge,
        div_score;
    double pass_at_1 = 0.0;
    double pass_at_k = 0.0;
};
DiversityTable diversity_table(const std::vector<Rollout>& rollouts);

/// Final-policy samples on the held-out prompts (K per prompt, in prompt order).
std::vector<Rollout> evaluate_heldout(const PolicyParams& params, const TaskBank& heldout, const TrainConfig& cfg);

struct RunResult {
    RunState state;
    RunSummary summary;
    std::vector<std::string> events;
    std::vector<Rollout> eval_rollouts;
};

/// Full run in memory.
RunResult train(const TrainConfig& cfg);

/// Full run writing metrics.csv, events.jsonl, policy.ckpt, config.ini,
/// task_bank.json, eval_rollouts.jsonl and summary.json under `out`.
RunSummary run(const TrainConfig& cfg, const std::filesystem::path& out);

std::string summary_to_json(const RunSummary& s, const TrainConfig& cfg);

}  // namespace scopelab
