#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scopelab/rng.hpp"
#include "scopelab/trajectory.hpp"

namespace scopelab {

// Synthetic step-structured reasoning environment.
//
// A ChainWorld is a layered grammar shared by every task of a bank. Layer m
// (1-based, one per reasoning step) partitions the content tokens into blocks
// of 1-3 interchangeable tokens; each block either continues into a block of
// layer m+1 or is a terminal singleton holding an answer. A task starts from a
// cue token, follows the transitions, and ends with the answer step
// [answer, kAnswerMarker]. A correct rollout therefore looks like
//
//     x1 | x2 | ... | x_{D-1} | a <marker>
//
// where each x_m is any token of the layer-m block and '|' is the delimiter.
// Because blocks are shared, the next correct step depends only on the layer
// and the previous content token.

struct WorldConfig {
    std::size_t vocab_size = 8;
    std::size_t min_depth = 4;  // total steps, answer step included
    std::size_t max_depth = 8;
    double terminal_probability = 0.5;  // chance a singleton at layer >= min_depth is terminal
};

struct Block {
    std::vector<Token> tokens;  // sorted ascending
    bool terminal = false;
    std::size_t next = 0;       // block index in the following layer (non-terminal only)
};

struct Layer {
    std::vector<Block> blocks;
    std::vector<std::size_t> block_of;  // indexed by token id; npos for reserved ids
};

class ChainWorld {
public:
    static ChainWorld generate(const WorldConfig& cfg, std::uint64_t seed);

    const WorldConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t vocab_size() const { return cfg_.vocab_size; }
    std::size_t content_count() const { return cfg_.vocab_size - kFirstContentToken; }

    /// layers()[0] is unused; layers()[m] describes step m (1-based).
    const std::vector<Layer>& layers() const { return layers_; }
    /// Layer-1 block entered from each cue token (indexed by token id).
    const std::vector<std::size_t>& start() const { return start_; }

    /// Tokens a well-formed correct rollout may emit at `position` after the
    /// previous content token `prev` (the cue at the first step). Empty when the
    /// context is not reachable by a correct rollout.
    std::vector<Token> grammatical_next(std::size_t position, Token prev) const;

    static ChainWorld from_parts(WorldConfig cfg, std::uint64_t seed, std::vector<Layer> layers,
                                 std::vector<std::size_t> start);

private:
    WorldConfig cfg_;
    std::uint64_t seed_ = 0;
    std::vector<Layer> layers_;
    std::vector<std::size_t> start_;
};

struct ChainTask {
    std::string prompt_id;
    Token cue = kFirstContentToken;
    std::size_t depth = 0;                      // D, answer step included
    std::vector<std::vector<Step>> accepted;    // accepted[m] for step m (0-based), sorted
    Token answer = kFirstContentToken;

    bool step_is_accepted(std::size_t m, const Step& step) const;
    /// Number of leading steps of `steps` that are truly correct.
    std::size_t correct_prefix_length(const std::vector<Step>& steps) const;
    void validate() const;
};

ChainTask make_task(const ChainWorld& world, std::string prompt_id, Token cue);

struct TaskBank {
    ChainWorld world;
    std::vector<ChainTask> tasks;

    /// `count` tasks with uniformly drawn cues. Prompt ids are `prefix` + index.
    static TaskBank generate(const ChainWorld& world, std::size_t count, std::uint64_t seed,
                             const std::string& prefix = "task-");
    const ChainTask& find(const std::string& prompt_id) const;
};

// JSON export/import: world seed and layers plus every task's accepted sets.
void write_task_bank(std::ostream& out, const TaskBank& bank);
TaskBank read_task_bank(std::istream& in);

struct PRMNoise {
    double eta = 0.0;
    explicit PRMNoise(double eta_value = 0.0);
};

/// Outcome-only reward: 1 iff the rollout ends with the answer-slot marker, the
/// slot holds the task's answer, and the slot is step D (the last step is
/// exactly [answer, marker] and the rollout has D steps).
int verify(const ChainTask& task, const TokenSeq& tokens);
inline int verify(const ChainTask& task, const Rollout& rollout) { return verify(task, rollout.tokens); }

/// Oracle process reward: 1-eta for steps inside the correct prefix, eta
/// afterwards, each perturbed by U[-eta/2, eta/2] and clamped to [0, 1].
std::vector<double> oracle_step_scores(const ChainTask& task, const std::vector<Step>& steps,
                                       const PRMNoise& noise, Rng& rng);

struct Refinement {
    std::size_t kept = 0;           // truly-correct prefix steps the continuation attaches to
    std::vector<Step> continuation; // lexicographically least accepted completion
};

/// Deterministic teacher. Restarts from the longest truly-correct prefix of
/// `prefix_steps` and completes the chain with the least accepted step at
/// every remaining position.
Refinement oracle_refine(const ChainTask& task, const std::vector<Step>& prefix_steps);

}  // namespace scopelab
