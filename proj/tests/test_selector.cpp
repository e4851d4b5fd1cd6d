#include <gtest/gtest.h>

#include <cmath>

#include "scopelab/selector.hpp"
#include "support/oracles.hpp"
#include "support/random_groups.hpp"

using namespace scopelab;

namespace {

RolloutGroup with_rewards(const std::vector<int>& rewards) {
    RolloutGroup g;
    g.prompt_id = "p";
    for (int r : rewards) {
        Rollout o;
        o.prompt_id = "p";
        o.tokens = {3, 0, 4};
        o.reward = r;
        g.rollouts.push_back(o);
    }
    return g;
}

VerifiedPrefix prefix(std::size_t k, std::size_t c, std::size_t m) {
    VerifiedPrefix p;
    p.k = k;
    p.c = c;
    p.m_total = m;
    return p;
}

}  // namespace

TEST(Gate, NeedsTwoFailures) {
    EXPECT_TRUE(gate(with_rewards({1, 0, 0, 1})));
    EXPECT_FALSE(gate(with_rewards({1, 1, 1, 0})));
    EXPECT_FALSE(gate(with_rewards({1, 1, 1, 1})));
    EXPECT_TRUE(gate(with_rewards({0, 0})));
}

TEST(BatchStatsTest, ClosedForms) {
    const BatchStats a = batch_stats({4, 4, 4, 4}, {1, 1, 1, 1});
    EXPECT_EQ(a.mean_steps, 4.0);
    EXPECT_EQ(a.std_steps, 0.0);
    const BatchStats b = batch_stats({2, 6}, {10, 30});
    EXPECT_EQ(b.mean_steps, 4.0);
    EXPECT_EQ(b.std_steps, 2.0);
    EXPECT_EQ(b.mean_tokens, 20.0);
    EXPECT_EQ(b.std_tokens, 10.0);
}

TEST(BatchStatsTest, MatchesExtendedPrecision) {
    Rng rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::size_t> m, l;
        std::vector<long double> mm, ll;
        const auto g = rng.uniform_int(1, 12);
        for (int i = 0; i < g; ++i) {
            m.push_back(static_cast<std::size_t>(rng.uniform_int(1, 40)));
            l.push_back(static_cast<std::size_t>(rng.uniform_int(1, 400)));
            mm.push_back(static_cast<long double>(m.back()));
            ll.push_back(static_cast<long double>(l.back()));
        }
        const BatchStats s = batch_stats(m, l);
        EXPECT_NEAR(s.mean_steps, static_cast<double>(oracle::mean_of(mm)), 1e-12);
        EXPECT_NEAR(s.std_steps, static_cast<double>(oracle::pop_std(mm)), 1e-12);
        EXPECT_NEAR(s.mean_tokens, static_cast<double>(oracle::mean_of(ll)), 1e-10);
        EXPECT_NEAR(s.std_tokens, static_cast<double>(oracle::pop_std(ll)), 1e-10);
    }
}

TEST(GaussianWeight, ClosedForms) {
    EXPECT_EQ(gaussian_weight(3.0, 3.0, 1.5), 1.0);
    EXPECT_NEAR(gaussian_weight(4.5, 3.0, 1.5), 0.60653065971263342, 1e-15);
    EXPECT_NEAR(gaussian_weight(6.0, 3.0, 1.5), 0.1353352832366127, 1e-15);
    EXPECT_EQ(gaussian_weight(2.0, 2.0, 0.0), 1.0);
    EXPECT_EQ(gaussian_weight(2.5, 2.0, 0.0), 0.0);
    EXPECT_THROW(gaussian_weight(1.0, 1.0, -1.0), std::invalid_argument);
}

TEST(SelectionScoreTest, AtTheMean) {
    const BatchStats s{10.0, 2.0, 50.0, 5.0};
    const SelectionScore sc = selection_score(10, 50, prefix(5, 20, 10), s);
    EXPECT_DOUBLE_EQ(sc.alpha, 1.0);
    EXPECT_DOUBLE_EQ(sc.beta, 1.0);
    EXPECT_DOUBLE_EQ(sc.score, 0.9);
    EXPECT_EQ(selection_score(10, 50, prefix(0, 0, 10), s).score, 0.0);
    EXPECT_THROW(selection_score(0, 50, prefix(0, 0, 0), s), std::invalid_argument);
}

TEST(SelectionScoreTest, ThreeRolloutReference) {
    // M=[3,5,10], L=[30,50,100], k=[2,4,1], c=[20,40,10]; values from a
    // 40-digit evaluation of the same formulas.
    const BatchStats s = batch_stats({3, 5, 10}, {30, 50, 100});
    EXPECT_NEAR(s.mean_steps, 6.0, 1e-15);
    EXPECT_NEAR(s.std_steps, 2.9439202887759489516, 1e-14);
    const double expect[3] = {0.47199850252895644309, 1.4256374027128901492, 0.031568617826970334844};
    const double weight[3] = {0.59497804740739580695, 0.94394034594118093732, 0.39729471319771129597};
    const std::size_t m[3] = {3, 5, 10}, l[3] = {30, 50, 100}, k[3] = {2, 4, 1}, c[3] = {20, 40, 10};
    for (int i = 0; i < 3; ++i) {
        const SelectionScore sc = selection_score(m[i], l[i], prefix(k[i], c[i], m[i]), s);
        EXPECT_NEAR(sc.alpha, weight[i], 1e-12);
        EXPECT_NEAR(sc.beta, weight[i], 1e-12);
        EXPECT_NEAR(sc.score, expect[i], 1e-10);
    }
}

TEST(SelectCandidate, ClosedGateGivesNothing) {
    const RolloutGroup g = with_rewards({1, 1, 0});
    EXPECT_FALSE(select_candidate(g, {std::nullopt, std::nullopt, prefix(0, 0, 2)}, batch_stats(g)).has_value());
}

TEST(SelectCandidate, TiesGoToLowestFailingIndex) {
    const RolloutGroup g = with_rewards({1, 0, 0, 0});
    const auto p = prefix(0, 0, 2);
    const auto sel = select_candidate(g, {std::nullopt, p, p, p}, batch_stats(g));
    ASSERT_TRUE(sel);
    EXPECT_EQ(sel->index, 1u);
    EXPECT_FALSE(sel->scores[0].has_value());
    EXPECT_TRUE(sel->scores[3].has_value());
}

TEST(SelectCandidate, MissingPrefixIsAnError) {
    const RolloutGroup g = with_rewards({0, 0});
    EXPECT_THROW(select_candidate(g, {prefix(0, 0, 2), std::nullopt}, batch_stats(g)), std::invalid_argument);
}

TEST(SelectCandidate, MatchesBruteForceOnRandomGroups) {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto rg = testsupport::random_failing_group(rng);
        std::vector<std::optional<VerifiedPrefix>> prefixes;
        std::vector<long double> all_m, all_l;
        for (std::size_t i = 0; i < rg.group.size(); ++i) {
            prefixes.push_back(verified_prefix(rg.scores[i], rg.group.rollouts[i]));
            all_m.push_back(static_cast<long double>(rg.group.rollouts[i].step_count()));
            all_l.push_back(static_cast<long double>(rg.group.rollouts[i].token_count()));
        }
        const auto cands = testsupport::candidates_of(rg);
        const auto [scores, best] = oracle::select(all_m, all_l, rg.group.rewards(), cands);
        const auto sel = select_candidate(rg.group, prefixes, batch_stats(rg.group));
        ASSERT_TRUE(sel);
        ASSERT_EQ(sel->index, best) << "trial " << trial;
        for (std::size_t i = 0; i < rg.group.size(); ++i) {
            if (rg.group.rollouts[i].reward != 0) continue;
            ASSERT_NEAR(sel->scores[i]->score, static_cast<double>(scores[i]), 1e-10);
        }
    }
}

TEST(SelectionProperties, BoundsAndOutlierSuppression) {
    Rng rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        const BatchStats s{rng.uniform(1, 10), rng.uniform(0.1, 4), rng.uniform(5, 60), rng.uniform(0.5, 20)};
        const auto m = static_cast<std::size_t>(rng.uniform_int(1, 12));
        const auto l = m + static_cast<std::size_t>(rng.uniform_int(0, 40));
        const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m)));
        const auto c = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(l)));
        const SelectionScore sc = selection_score(m, l, prefix(k, c, m), s);
        ASSERT_GE(sc.score, 0.0);
        ASSERT_LE(sc.score, 2.0);
        ASSERT_DOUBLE_EQ(sc.score, sc.alpha * sc.beta * (sc.r_step + sc.r_token));
        // moving M further from the mean (same progress ratios) lowers alpha
        const double d = std::abs(static_cast<double>(m) - s.mean_steps);
        const double farther = s.mean_steps + (static_cast<double>(m) >= s.mean_steps ? d + 1 : -(d + 1));
        const double w_here = gaussian_weight(static_cast<double>(m), s.mean_steps, s.std_steps);
        const double w_far = gaussian_weight(farther, s.mean_steps, s.std_steps);
        if (w_here > 0.0) ASSERT_LT(w_far, w_here);
        else ASSERT_EQ(w_far, 0.0);
    }
}

TEST(SelectionProperties, CloserRolloutNeverScoresLower) {
    // equal progress ratios, the second one sits nearer the group means
    const BatchStats s{6.0, 2.0, 40.0, 10.0};
    const SelectionScore far = selection_score(10, 70, prefix(5, 35, 10), s);
    const SelectionScore near = selection_score(8, 50, prefix(4, 25, 8), s);
    EXPECT_DOUBLE_EQ(far.r_step, near.r_step);
    EXPECT_DOUBLE_EQ(far.r_token, near.r_token);
    EXPECT_GE(near.score, far.score);
}
