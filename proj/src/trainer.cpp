#include "scopelab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "scopelab/config.hpp"

namespace scopelab {

namespace {

using nlohmann::json;

// Purposes of the independent random streams of a run.
enum : std::uint64_t {
    kStreamSample = 1,
    kStreamSchedule = 2,
    kStreamPrm = 3,
    kStreamPrior = 4,
    kStreamEval = 5,
};

constexpr std::uint64_t kHeldoutSalt = 0x686f6c64ULL;

std::size_t policy_positions(const TrainConfig& cfg) {
    // Room for a rectified rollout: a full-length prefix plus a complete chain.
    return cfg.max_tokens + 2 * cfg.world.max_depth + 1;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index writes
/// only its own output slot, so the result does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::optional<Percentiles> summarize(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return percentile_summary(v);
}

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::optional<double> median_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return percentile_summary(v).p50;
}

json percentiles_json(const std::optional<Percentiles>& p) {
    if (!p) return nullptr;
    return {{"p10", p->p10}, {"p50", p->p50}, {"p90", p->p90}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

const char* to_string(Algorithm a) { return a == Algorithm::kGrpo ? "grpo" : "scope"; }
const char* to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }
const char* to_string(MergeMode m) { return m == MergeMode::kReplace ? "replace" : "append"; }
const char* to_string(ShapingGrad s) { return s == ShapingGrad::kDetached ? "detached" : "full"; }

void TrainConfig::validate() const {
    const auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
    if (world.vocab_size < 4 || world.vocab_size > 256) fail("vocab_size must be in [4, 256]");
    if (world.min_depth < 2) fail("min_depth must be >= 2");
    if (world.max_depth < world.min_depth) fail("max_depth must be >= min_depth");
    if (!(world.terminal_probability >= 0.0 && world.terminal_probability <= 1.0))
        fail("terminal_probability must be in [0, 1]");
    if (bank_size < 1) fail("bank_size must be >= 1");
    if (!(eta >= 0.0 && eta < 0.5)) fail("eta must be in [0, 0.5)");
    if (eval_samples < 1) fail("eval_samples must be >= 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be > 0");
    if (max_tokens < 1) fail("max_tokens must be >= 1");
    if (!(prior.noise >= 0.0)) fail("prior_noise must be >= 0");
    objective.validate();
    if (group_size < 2) fail("group_size must be >= 2");
    if (tasks_per_update < 1) fail("tasks_per_update must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
    if (updates < 1) fail("updates must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) fail("tau must be in (0, 1)");
    if (ppo_epochs < 1) fail("ppo_epochs must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        fail("adam betas must be in [0, 1)");
    if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
    if (workers < 1) fail("workers must be >= 1");
}

PolicyParams initial_policy(const ChainWorld& world, const TrainConfig& cfg) {
    const std::size_t v = world.vocab_size();
    PolicyParams params(policy_positions(cfg), v, cfg.temperature);
    Rng rng = Rng::stream({cfg.seed, kStreamPrior});

    // Favourite alias of every block.
    std::vector<std::vector<Token>> habit(world.layers().size());
    for (std::size_t m = 1; m < world.layers().size(); ++m)
        for (const Block& b : world.layers()[m].blocks)
            habit[m].push_back(b.tokens[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(b.tokens.size()) - 1))]);

    auto logits = params.logits();
    for (double& x : logits) x = cfg.prior.noise * rng.normal();
    for (std::size_t p = 0; p < params.max_positions(); ++p) {
        for (std::size_t prev = kFirstContentToken; prev < v; ++prev) {
            const auto tok = static_cast<Token>(prev);
            const std::vector<Token> next = world.grammatical_next(p, tok);
            if (next.empty()) continue;
            auto row = params.row({p, tok});
            for (Token t : next) row[t] += cfg.prior.grammar_bonus;
            if (p % 2 == 0) {
                const std::size_t m = p / 2 + 1;
                const std::size_t b = world.layers()[m].block_of[next.front()];
                row[habit[m][b]] += cfg.prior.habit_bonus;
            }
        }
    }
    return params;
}

TaskBank heldout_bank(const ChainWorld& world, const TrainConfig& cfg) {
    return TaskBank::generate(world, cfg.eval_tasks, cfg.world_seed ^ kHeldoutSalt, "heldout-");
}

RunState initial_state(const TaskBank& bank, const TrainConfig& cfg) {
    RunState s;
    s.params = initial_policy(bank.world, cfg);
    if (cfg.optimizer == Optimizer::kAdam) {
        s.adam_m.assign(s.params.size(), 0.0);
        s.adam_v.assign(s.params.size(), 0.0);
    }
    return s;
}

GroupOutcome process_group(const ChainTask& task, RolloutGroup sampled, const PolicySnapshot& snapshot,
                           const TrainConfig& cfg, Rng& prm_rng, std::size_t update, std::size_t group_index) {
    GroupOutcome out;
    for (Rollout& r : sampled.rollouts) r.reward = verify(task, r);

    // Failures are always judged by the PRM: near-miss statistics need it for
    // both algorithms, and it keeps the random streams aligned between them.
    const PRMNoise noise(cfg.eta);
    out.prefixes.resize(sampled.size());
    for (std::size_t i = 0; i < sampled.size(); ++i) {
        const Rollout& r = sampled.rollouts[i];
        if (r.reward != 0) continue;
        StepScores scores{oracle_step_scores(task, r.steps(), noise, prm_rng), cfg.tau};
        out.prefixes[i] = verified_prefix(scores, r);
    }
    out.merged = sampled;

    const std::size_t failures = sampled.failure_count();
    if (cfg.algorithm == Algorithm::kScope && cfg.rectify && gate(sampled)) {
        const BatchStats stats = batch_stats(sampled);
        out.selection = select_candidate(sampled, out.prefixes, stats);
        const Selection& sel = *out.selection;
        json scores = json::array();
        for (const auto& s : sel.scores) scores.push_back(s ? json(s->score) : json(nullptr));
        out.events.push_back(json{{"event", "selection"},
                                  {"update", update},
                                  {"group", group_index},
                                  {"prompt_id", sampled.prompt_id},
                                  {"failures", failures},
                                  {"scores", scores},
                                  {"chosen", sel.index}}
                                 .dump());

        const VerifiedPrefix& prefix = *out.prefixes[sel.index];
        out.rectified = rectify(task, sampled.rollouts[sel.index], sel.index, prefix, oracle_refine,
                                snapshot.params());
        const RectifiedRollout& rr = *out.rectified;
        out.events.push_back(json{{"event", "rectification"},
                                  {"update", update},
                                  {"group", group_index},
                                  {"prompt_id", sampled.prompt_id},
                                  {"failures", failures},
                                  {"source_index", rr.source_index},
                                  {"k", prefix.k},
                                  {"kept_steps", rr.kept_steps},
                                  {"c", rr.prefix_tokens},
                                  {"suffix_tokens", rr.suffix_tokens},
                                  {"source_steps", prefix.m_total},
                                  {"reward", rr.rollout.reward}}
                                 .dump());
        out.merged = merge_into_group(sampled, out.rectified, cfg.merge);
    }
    out.sampled = std::move(sampled);
    return out;
}

StepOutput train_step(RunState& state, const TaskBank& bank, const TrainConfig& cfg) {
    if (bank.tasks.empty()) throw std::invalid_argument("train_step: empty task bank");
    const std::size_t update = state.update + 1;
    const PolicySnapshot snapshot(state.params);

    Rng sched = Rng::stream({cfg.seed, kStreamSchedule, update});
    std::vector<std::size_t> picks(cfg.tasks_per_update);
    for (std::size_t& p : picks)
        p = static_cast<std::size_t>(sched.uniform_int(0, static_cast<std::int64_t>(bank.tasks.size()) - 1));

    std::vector<GroupOutcome> outcomes(picks.size());
    std::vector<AdvantageVector> advantages(picks.size());
    std::vector<double> entropy(picks.size(), 0.0);
    parallel_for(picks.size(), cfg.workers, [&](std::size_t g) {
        const ChainTask& task = bank.tasks[picks[g]];
        Rng rng = Rng::stream({cfg.seed, kStreamSample, update, g});
        RolloutGroup group;
        group.prompt_id = task.prompt_id;
        for (std::size_t i = 0; i < cfg.group_size; ++i)
            group.rollouts.push_back(sample_rollout(snapshot.params(), task.prompt_id, task.cue, cfg.max_tokens, rng));
        for (const Rollout& r : group.rollouts) entropy[g] += mean_policy_entropy(snapshot.params(), r);
        Rng prm_rng = Rng::stream({cfg.seed, kStreamPrm, update, g});
        outcomes[g] = process_group(task, std::move(group), snapshot, cfg, prm_rng, update, g);
        advantages[g] = group_advantages(outcomes[g].merged, cfg.objective.advantage_epsilon);
    });

    std::vector<std::vector<double>> grads(picks.size());
    for (std::size_t epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
        parallel_for(picks.size(), cfg.workers, [&](std::size_t g) {
            grads[g] = scope_objective(outcomes[g].merged, advantages[g], state.params, snapshot, cfg.objective)
                           .gradient;
        });
        std::vector<double> total(state.params.size(), 0.0);
        for (const auto& gr : grads)
            for (std::size_t j = 0; j < total.size(); ++j) total[j] += gr[j];

        auto theta = state.params.logits();
        if (cfg.optimizer == Optimizer::kSgd) {
            for (std::size_t j = 0; j < theta.size(); ++j) theta[j] += cfg.learning_rate * total[j];
        } else {
            ++state.adam_t;
            const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.adam_t));
            const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.adam_t));
            for (std::size_t j = 0; j < theta.size(); ++j) {
                state.adam_m[j] = cfg.adam_beta1 * state.adam_m[j] + (1.0 - cfg.adam_beta1) * total[j];
                state.adam_v[j] = cfg.adam_beta2 * state.adam_v[j] + (1.0 - cfg.adam_beta2) * total[j] * total[j];
                theta[j] += cfg.learning_rate * (state.adam_m[j] / c1) / (std::sqrt(state.adam_v[j] / c2) + cfg.adam_epsilon);
            }
        }
    }

    StepOutput out;
    MetricsRow& row = out.row;
    row.update = update;
    double reward_sum = 0.0, entropy_sum = 0.0;
    std::size_t n = 0;
    std::vector<NearMissPair> near;
    std::vector<double> keep, d1, d2, d4, bleu, rouge, div;
    for (std::size_t g = 0; g < outcomes.size(); ++g) {
        const GroupOutcome& o = outcomes[g];
        entropy_sum += entropy[g];
        SampleSet set;
        for (std::size_t i = 0; i < o.sampled.size(); ++i) {
            const Rollout& r = o.sampled.rollouts[i];
            reward_sum += r.reward;
            ++n;
            set.push_back(r.tokens);
            if (o.prefixes[i]) near.emplace_back(o.prefixes[i]->m_total, o.prefixes[i]->k);
        }
        if (o.rectified) {
            ++row.rectified_count;
            const std::size_t m = o.prefixes[o.rectified->source_index]->m_total;
            keep.push_back(m == 0 ? 0.0 : static_cast<double>(o.rectified->kept_steps) / static_cast<double>(m));
        }
        const DiversityComponents c = diversity_of(set);
        if (c.distinct_1) d1.push_back(*c.distinct_1);
        if (c.distinct_2) d2.push_back(*c.distinct_2);
        if (c.distinct_4) d4.push_back(*c.distinct_4);
        if (c.one_minus_self_bleu) bleu.push_back(*c.one_minus_self_bleu);
        if (c.one_minus_self_rouge) rouge.push_back(*c.one_minus_self_rouge);
        if (const DivScore ds = div_score(c); ds.value) div.push_back(*ds.value);
        out.events.insert(out.events.end(), o.events.begin(), o.events.end());
    }
    row.mean_reward = reward_sum / static_cast<double>(n);
    row.entropy = entropy_sum / static_cast<double>(n);
    row.keep_ratio = mean_of(keep);
    row.near_miss_1 = near_miss_at_k(near, 1);
    row.near_miss_2 = near_miss_at_k(near, 2);
    row.near_miss_3 = near_miss_at_k(near, 3);
    row.distinct_1 = median_of(d1);
    row.distinct_2 = median_of(d2);
    row.distinct_4 = median_of(d4);
    row.one_minus_self_bleu = median_of(bleu);
    row.one_minus_self_rouge = median_of(rouge);
    row.div_score = median_of(div);

    state.update = update;
    state.metrics.push_back(row);
    return out;
}

DiversityTable diversity_table(const std::vector<Rollout>& rollouts) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const Rollout*>> by_prompt;
    for (const Rollout& r : rollouts) {
        auto [it, fresh] = by_prompt.try_emplace(r.prompt_id);
        if (fresh) order.push_back(r.prompt_id);
        it->second.push_back(&r);
    }
    DiversityTable t;
    t.prompts = order.size();
    if (order.empty()) return t;
    t.samples_per_prompt = by_prompt[order.front()].size();
    for (const auto& id : order) t.samples_per_prompt = std::min(t.samples_per_prompt, by_prompt[id].size());

    std::vector<double> d1, d2, d4, bleu, rouge, div;
    std::vector<std::vector<int>> rewards;
    for (const auto& id : order) {
        const auto& members = by_prompt[id];
        SampleSet set;
        std::vector<int> rw;
        for (std::size_t i = 0; i < t.samples_per_prompt; ++i) {
            set.push_back(members[i]->tokens);
            rw.push_back(members[i]->reward);
        }
        rewards.push_back(std::move(rw));
        const DiversityComponents c = diversity_of(set);
        if (c.distinct_1) d1.push_back(*c.distinct_1);
        if (c.distinct_2) d2.push_back(*c.distinct_2);
        if (c.distinct_4) d4.push_back(*c.distinct_4);
        if (c.one_minus_self_bleu) bleu.push_back(*c.one_minus_self_bleu);
        if (c.one_minus_self_rouge) rouge.push_back(*c.one_minus_self_rouge);
        if (const DivScore ds = div_score(c); ds.value) div.push_back(*ds.value);
    }
    t.distinct_1 = summarize(d1);
    t.distinct_2 = summarize(d2);
    t.distinct_4 = summarize(d4);
    t.one_minus_self_bleu = summarize(bleu);
    t.one_minus_self_rouge = summarize(rouge);
    t.div_score = summarize(div);
    t.pass_at_1 = pass_at_k(rewards, 1);
    t.pass_at_k = pass_at_k(rewards, t.samples_per_prompt);
    return t;
}

std::vector<Rollout> evaluate_heldout(const PolicyParams& params, const TaskBank& heldout, const TrainConfig& cfg) {
    std::vector<Rollout> out;
    for (std::size_t i = 0; i < heldout.tasks.size(); ++i) {
        const ChainTask& task = heldout.tasks[i];
        Rng rng = Rng::stream({cfg.seed, kStreamEval, i});
        for (std::size_t k = 0; k < cfg.eval_samples; ++k) {
            Rollout r = sample_rollout(params, task.prompt_id, task.cue, cfg.max_tokens, rng);
            r.reward = verify(task, r);
            out.push_back(std::move(r));
        }
    }
    return out;
}

namespace {

RunSummary summarize_run(const std::vector<MetricsRow>& rows, const DiversityTable& eval) {
    RunSummary s;
    s.rows = rows.size();
    const std::size_t q = std::max<std::size_t>(1, rows.size() / 4);
    std::vector<double> final_reward, first_keep, final_keep;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool first = i < q, last = i >= rows.size() - q;
        if (last) final_reward.push_back(rows[i].mean_reward);
        if (rows[i].keep_ratio) {
            if (first) first_keep.push_back(*rows[i].keep_ratio);
            if (last) final_keep.push_back(*rows[i].keep_ratio);
        }
        s.rectifications += rows[i].rectified_count;
    }
    s.final_quartile_reward = mean_of(final_reward).value_or(0.0);
    s.first_quartile_keep_ratio = mean_of(first_keep);
    s.final_quartile_keep_ratio = mean_of(final_keep);
    if (!rows.empty()) s.final_near_miss_1 = rows.back().near_miss_1;
    s.eval_distinct_1 = eval.distinct_1;
    s.eval_distinct_4 = eval.distinct_4;
    s.eval_one_minus_self_bleu = eval.one_minus_self_bleu;
    s.eval_one_minus_self_rouge = eval.one_minus_self_rouge;
    s.eval_div_score = eval.div_score;
    s.eval_pass_at_1 = eval.pass_at_1;
    s.eval_pass_at_k = eval.pass_at_k;
    return s;
}

}  // namespace

RunResult train(const TrainConfig& cfg) {
    cfg.validate();
    const ChainWorld world = ChainWorld::generate(cfg.world, cfg.world_seed);
    const TaskBank bank = TaskBank::generate(world, cfg.bank_size, cfg.world_seed);
    RunResult result;
    result.state = initial_state(bank, cfg);
    for (std::size_t u = 0; u < cfg.updates; ++u) {
        StepOutput step = train_step(result.state, bank, cfg);
        result.events.insert(result.events.end(), step.events.begin(), step.events.end());
    }
    result.eval_rollouts = evaluate_heldout(result.state.params, heldout_bank(world, cfg), cfg);
    result.summary = summarize_run(result.state.metrics, diversity_table(result.eval_rollouts));
    return result;
}

std::string summary_to_json(const RunSummary& s, const TrainConfig& cfg) {
    json j{{"algorithm", to_string(cfg.algorithm)},
           {"seed", cfg.seed},
           {"updates", s.rows},
           {"final_quartile_reward", s.final_quartile_reward},
           {"first_quartile_keep_ratio", optional_json(s.first_quartile_keep_ratio)},
           {"final_quartile_keep_ratio", optional_json(s.final_quartile_keep_ratio)},
           {"final_near_miss_1", optional_json(s.final_near_miss_1)},
           {"rectifications", s.rectifications},
           {"eval",
            {{"tasks", cfg.eval_tasks},
             {"samples_per_prompt", cfg.eval_samples},
             {"distinct_1", percentiles_json(s.eval_distinct_1)},
             {"distinct_4", percentiles_json(s.eval_distinct_4)},
             {"one_minus_self_bleu", percentiles_json(s.eval_one_minus_self_bleu)},
             {"one_minus_self_rouge", percentiles_json(s.eval_one_minus_self_rouge)},
             {"div_score", percentiles_json(s.eval_div_score)},
             {"pass_at_1", s.eval_pass_at_1},
             {"pass_at_k", s.eval_pass_at_k}}}};
    return j.dump(2);
}

RunSummary run(const TrainConfig& cfg, const std::filesystem::path& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec || !std::filesystem::is_directory(out))
        throw std::runtime_error("cannot create output directory " + out.string());
    const auto open = [&](const char* name, std::ios::openmode mode = std::ios::out) {
        std::ofstream f(out / name, mode);
        if (!f) throw std::runtime_error("cannot write " + (out / name).string());
        return f;
    };
    // The config echo goes first so a failed run still records what it was asked to do.
    open("config.ini") << format_config(cfg);

    const RunResult r = train(cfg);
    {
        auto f = open("metrics.csv");
        write_metrics_csv(f, r.state.metrics);
    }
    {
        auto f = open("events.jsonl");
        for (const auto& e : r.events) f << e << '\n';
    }
    {
        auto f = open("policy.ckpt", std::ios::out | std::ios::binary);
        write_checkpoint(f, r.state.params);
    }
    {
        const ChainWorld world = ChainWorld::generate(cfg.world, cfg.world_seed);
        auto f = open("task_bank.json");
        write_task_bank(f, TaskBank::generate(world, cfg.bank_size, cfg.world_seed));
    }
    {
        auto f = open("eval_rollouts.jsonl");
        write_rollouts_jsonl(f, r.eval_rollouts);
    }
    open("summary.json") << summary_to_json(r.summary, cfg) << '\n';
    return r.summary;
}

}  // namespace scopelab
