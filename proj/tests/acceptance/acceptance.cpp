// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scopelab/env.hpp"
#include "scopelab/metrics.hpp"
#include "scopelab/objective.hpp"
#include "scopelab/prm.hpp"
#include "scopelab/rectifier.hpp"
#include "scopelab/selector.hpp"
#include "scopelab/trainer.hpp"
#include "support/oracles.hpp"
#include "support/random_groups.hpp"

using namespace scopelab;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSeeds = 5;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    std::printf("%s criterion %d: %s -- %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

Outcome prefix_vector() {
    const TokenSeq t = join_steps({{2}, {3}, {4}, {5}});
    const VerifiedPrefix p = verified_prefix(StepScores{{1.0, 0.1904296875, 0.9765625, 1.0}, 0.5}, t);
    return {p.k == 1, "k=" + std::to_string(p.k)};
}

Outcome gradient_fidelity() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (ShapingGrad mode : {ShapingGrad::kDetached, ShapingGrad::kFull}) {
        ObjectiveConfig cfg;
        cfg.shaping_grad = mode;
        const RandomizedGradCheck r = randomized_gradient_check(100, 1e-5, 2024, cfg);
        worst = std::max(worst, r.max_relative_error);
        checked += r.checked;
        skipped += r.skipped_near_kink;
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0,
            "200 instances (both shaping modes), " + std::to_string(checked) + " coords, " + std::to_string(skipped) +
                " kink-skipped, max rel err " + fmt("%.3g", worst) + ", " + fmt("%.1f", secs) + " s"};
}

Outcome refiner_soundness() {
    Rng rng(4);
    std::size_t done = 0, bad = 0;
    std::uint64_t world_seed = 0;
    while (done < 10000) {
        WorldConfig wc;
        wc.vocab_size = static_cast<std::size_t>(rng.uniform_int(6, 16));
        wc.min_depth = static_cast<std::size_t>(rng.uniform_int(2, 5));
        wc.max_depth = wc.min_depth + static_cast<std::size_t>(rng.uniform_int(0, 4));
        const ChainWorld w = ChainWorld::generate(wc, world_seed++);
        const std::size_t max_tokens = 3 * wc.max_depth + 4;
        PolicyParams p(max_tokens, wc.vocab_size, 1.0);
        for (double& x : p.logits()) x = 1.5 * rng.normal();
        for (int i = 0; i < 200 && done < 10000; ++i) {
            const auto cue = static_cast<Token>(rng.uniform_int(2, static_cast<std::int64_t>(wc.vocab_size) - 1));
            const ChainTask task = make_task(w, "t", cue);
            Rollout src = sample_rollout(p, "t", cue, max_tokens, rng);
            src.reward = verify(task, src);
            if (src.reward == 1) continue;
            Rng prm(rng.next_u64());
            const VerifiedPrefix pre =
                verified_prefix(StepScores{oracle_step_scores(task, src.steps(), PRMNoise(0.0), prm), 0.5}, src);
            const RectifiedRollout rr = rectify(task, src, 0, pre, oracle_refine, p);
            bool ok = verify(task, rr.rollout) == 1 && rr.rollout.reward == 1 && rr.prefix_tokens == pre.c &&
                      rr.rollout.tokens.size() >= pre.c;
            for (std::size_t j = 0; ok && j < pre.c; ++j) ok = rr.rollout.tokens[j] == src.tokens[j];
            bad += !ok;
            ++done;
        }
    }
    return {bad == 0, std::to_string(done) + " rectifications, " + std::to_string(bad) + " unsound"};
}

Outcome selection_oracle() {
    Rng rng(9);
    std::size_t mismatched = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto rg = testsupport::random_failing_group(rng);
        std::vector<std::optional<VerifiedPrefix>> prefixes;
        std::vector<long double> all_m, all_l;
        for (std::size_t i = 0; i < rg.group.size(); ++i) {
            prefixes.push_back(verified_prefix(rg.scores[i], rg.group.rollouts[i]));
            all_m.push_back(static_cast<long double>(rg.group.rollouts[i].step_count()));
            all_l.push_back(static_cast<long double>(rg.group.rollouts[i].token_count()));
        }
        const auto [scores, best] = oracle::select(all_m, all_l, rg.group.rewards(), testsupport::candidates_of(rg));
        const auto sel = select_candidate(rg.group, prefixes, batch_stats(rg.group));
        if (!sel || sel->index != best) {
            ++mismatched;
            continue;
        }
        for (std::size_t i = 0; i < rg.group.size(); ++i)
            if (rg.group.rollouts[i].reward == 0)
                worst = std::max(worst, std::abs(sel->scores[i]->score - static_cast<double>(scores[i])));
    }
    return {mismatched == 0 && worst <= 1e-10,
            "1000 groups, " + std::to_string(mismatched) + " index mismatches, max score diff " + fmt("%.3g", worst)};
}

Outcome metric_oracles() {
    Rng rng(10);
    const auto random_set = [&](std::size_t k_min) {
        SampleSet s(static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k_min), 8)));
        for (TokenSeq& t : s) {
            t.resize(static_cast<std::size_t>(rng.uniform_int(1, 12)));
            for (Token& x : t) x = static_cast<Token>(rng.uniform_int(0, 5));
        }
        return s;
    };
    double d_distinct = 0, d_bleu = 0, d_rouge = 0, d_near = 0, d_pass = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const SampleSet s = random_set(1);
        for (std::size_t n : {1, 2, 4}) {
            const auto got = distinct_n(s, n);
            const double want = oracle::distinct_n(s, n);
            d_distinct = std::max(d_distinct, (want < 0) != !got ? 1.0 : got ? std::abs(*got - want) : 0.0);
        }
    }
    for (int trial = 0; trial < 100; ++trial) {
        const SampleSet s = random_set(2);
        d_bleu = std::max(d_bleu, std::abs(self_bleu(s) - static_cast<double>(oracle::self_bleu(s))));
    }
    for (int trial = 0; trial < 100; ++trial) {
        const SampleSet s = random_set(2);
        d_rouge = std::max(d_rouge, std::abs(self_rouge_l(s) - static_cast<double>(oracle::self_rouge(s))));
    }
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<NearMissPair> p(static_cast<std::size_t>(rng.uniform_int(1, 20)));
        for (auto& [n, c] : p) {
            n = static_cast<std::size_t>(rng.uniform_int(1, 10));
            c = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n)));
        }
        for (std::size_t k = 1; k <= 3; ++k) d_near = std::max(d_near, std::abs(*near_miss_at_k(p, k) - oracle::near_miss(p, k)));
    }
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<int>> r(static_cast<std::size_t>(rng.uniform_int(1, 10)), std::vector<int>(10));
        for (auto& row : r)
            for (int& x : row) x = rng.uniform() < 0.15 ? 1 : 0;
        for (std::size_t k : {1, 5, 10}) d_pass = std::max(d_pass, std::abs(pass_at_k(r, k) - oracle::pass_at(r, k)));
    }
    const double worst = std::max({d_distinct, d_bleu, d_rouge, d_near, d_pass});
    return {worst <= 1e-6, "max |diff| distinct " + fmt("%.2g", d_distinct) + ", self-BLEU " + fmt("%.2g", d_bleu) +
                               ", self-ROUGE-L " + fmt("%.2g", d_rouge) + ", near-miss " + fmt("%.2g", d_near) +
                               ", pass@k " + fmt("%.2g", d_pass)};
}

struct Runs {
    std::vector<RunSummary> grpo, scope;
    double seconds = 0.0;
    fs::path dir;
};

Runs training_runs() {
    Runs r;
    r.dir = fs::temp_directory_path() / "scopelab_acceptance";
    fs::remove_all(r.dir);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < kSeeds; ++s)
        for (Algorithm a : {Algorithm::kGrpo, Algorithm::kScope}) {
            TrainConfig cfg;
            cfg.algorithm = a;
            cfg.seed = s;
            const RunSummary sum = run(cfg, r.dir / to_string(a) / ("seed-" + std::to_string(s)));
            (a == Algorithm::kGrpo ? r.grpo : r.scope).push_back(sum);
            std::printf("  run %s seed %zu: final-quartile reward %.4f, final near_miss@1 %s, held-out distinct-4 p50 %s\n",
                        to_string(a), s, sum.final_quartile_reward,
                        sum.final_near_miss_1 ? fmt("%.4f", *sum.final_near_miss_1).c_str() : "-",
                        sum.eval_distinct_4 ? fmt("%.4f", sum.eval_distinct_4->p50).c_str() : "-");
            std::fflush(stdout);
        }
    r.seconds = seconds_since(t0);
    return r;
}

Outcome grpo_reduction(const Runs& runs) {
    TrainConfig cfg;
    cfg.algorithm = Algorithm::kScope;
    cfg.rectify = false;
    cfg.objective.rho = 0.0;
    cfg.seed = 0;
    const fs::path dir = runs.dir / "scope-no-recycling";
    run(cfg, dir);
    const std::string a = slurp(dir / "metrics.csv");
    const std::string b = slurp(runs.dir / "grpo" / "seed-0" / "metrics.csv");
    return {!a.empty() && a == b, std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " bytes, " +
                                      (a == b ? "identical" : "different")};
}

Outcome reward_trend(const Runs& r) {
    double g = 0, s = 0;
    for (std::size_t i = 0; i < kSeeds; ++i) {
        g += r.grpo[i].final_quartile_reward;
        s += r.scope[i].final_quartile_reward;
    }
    g /= kSeeds;
    s /= kSeeds;
    return {s - g >= 0.02 && r.seconds < 300.0, "SCOPE " + fmt("%.4f", s) + " vs GRPO " + fmt("%.4f", g) + " (gap " +
                                                    fmt("%+.4f", s - g) + "), 10 runs in " + fmt("%.1f", r.seconds) +
                                                    " s"};
}

Outcome keep_ratio_trend(const Runs& r) {
    std::size_t wins = 0;
    std::string d;
    for (std::size_t i = 0; i < kSeeds; ++i) {
        const auto& s = r.scope[i];
        const bool win = s.first_quartile_keep_ratio && s.final_quartile_keep_ratio &&
                         *s.final_quartile_keep_ratio > *s.first_quartile_keep_ratio;
        wins += win;
        d += (i ? ", " : "") + (s.first_quartile_keep_ratio ? fmt("%.3f", *s.first_quartile_keep_ratio) : "-") +
             "->" + (s.final_quartile_keep_ratio ? fmt("%.3f", *s.final_quartile_keep_ratio) : "-");
    }
    return {wins >= 4, std::to_string(wins) + "/5 seeds increase (" + d + ")"};
}

Outcome near_miss(const Runs& r) {
    std::size_t wins = 0;
    std::string d;
    for (std::size_t i = 0; i < kSeeds; ++i) {
        const auto& g = r.grpo[i].final_near_miss_1;
        const auto& s = r.scope[i].final_near_miss_1;
        wins += g && s && *s <= *g;
        d += (i ? ", " : "") + (s ? fmt("%.3f", *s) : "-") + "<=" + (g ? fmt("%.3f", *g) : "-");
    }
    return {wins >= 4, std::to_string(wins) + "/5 seeds SCOPE<=GRPO (" + d + ")"};
}

Outcome diversity(const Runs& r) {
    std::size_t wins = 0;
    std::string d;
    for (std::size_t i = 0; i < kSeeds; ++i) {
        const auto& g = r.grpo[i].eval_distinct_4;
        const auto& s = r.scope[i].eval_distinct_4;
        wins += g && s && s->p50 >= g->p50;
        d += (i ? ", " : "") + (s ? fmt("%.3f", s->p50) : "-") + ">=" + (g ? fmt("%.3f", g->p50) : "-");
    }
    return {wins >= 4, std::to_string(wins) + "/5 seeds SCOPE>=GRPO, median distinct-4 K=10 on 30 held-out (" + d +
                           ")"};
}

Outcome gating(const Runs& r) {
    std::size_t events = 0, violations = 0;
    for (std::size_t s = 0; s < kSeeds; ++s) {
        std::ifstream in(r.dir / "scope" / ("seed-" + std::to_string(s)) / "events.jsonl");
        for (std::string line; std::getline(in, line);) {
            if (line.empty()) continue;
            const auto e = nlohmann::json::parse(line);
            if (e["event"] != "rectification") continue;
            ++events;
            violations += e["failures"].get<std::size_t>() <= 1;
        }
    }
    return {events > 0 && violations == 0, std::to_string(events) + " rectification events over 5 SCOPE runs, " +
                                               std::to_string(violations) + " with <=1 failure"};
}

}  // namespace

int main() {
    report(1, "verified prefix of the reference score vector", prefix_vector());
    report(2, "objective gradient vs central differences", gradient_fidelity());
    report(4, "refiner soundness at eta=0", refiner_soundness());
    report(9, "selection vs brute force", selection_oracle());
    report(10, "metrics vs brute-force oracles", metric_oracles());

    const Runs runs = training_runs();
    report(3, "SCOPE without recycling equals GRPO", grpo_reduction(runs));
    report(5, "final-quartile reward gap", reward_trend(runs));
    report(6, "keep ratio rises", keep_ratio_trend(runs));
    report(7, "final near_miss@1", near_miss(runs));
    report(8, "held-out distinct-4", diversity(runs));
    report(11, "gating discipline", gating(runs));

    fs::remove_all(runs.dir);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
