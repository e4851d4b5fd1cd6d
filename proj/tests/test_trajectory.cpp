#include <gtest/gtest.h>

#include <sstream>

#include "scopelab/rng.hpp"
#include "scopelab/trajectory.hpp"

using namespace scopelab;

TEST(Trajectory, SegmentDropsEmptySegments) {
    const TokenSeq t{0, 3, 4, 0, 0, 5, 0, 2, 1, 0};
    const std::vector<Step> steps = segment_steps(t);
    ASSERT_EQ(steps.size(), 3u);
    EXPECT_EQ(steps[0], (Step{3, 4}));
    EXPECT_EQ(steps[1], (Step{5}));
    EXPECT_EQ(steps[2], (Step{2, 1}));
    EXPECT_TRUE(segment_steps({}).empty());
    EXPECT_TRUE(segment_steps({0, 0}).empty());
}

TEST(Trajectory, JoinIsInverseOfSegmentOnWellFormedStreams) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Step> steps(static_cast<std::size_t>(rng.uniform_int(0, 6)));
        for (Step& s : steps) {
            s.resize(static_cast<std::size_t>(rng.uniform_int(1, 3)));
            for (Token& t : s) t = static_cast<Token>(rng.uniform_int(1, 9));
        }
        const TokenSeq joined = join_steps(steps);
        EXPECT_EQ(joined.size(), joined_length(steps));
        EXPECT_EQ(segment_steps(joined), steps);
    }
}

TEST(Trajectory, JoinRejectsBadSteps) {
    EXPECT_THROW(join_steps({{2}, {}}), std::invalid_argument);
    EXPECT_THROW(join_steps({{2, 0, 3}}), std::invalid_argument);
}

TEST(OriginMaskTest, StepFunction) {
    const OriginMask m(3, 2);
    EXPECT_EQ(m.size(), 5u);
    EXPECT_EQ(m.boundary(), 3u);
    EXPECT_EQ(m.flags(), (std::vector<std::uint8_t>{0, 0, 0, 1, 1}));
    EXPECT_EQ(OriginMask::on_policy(4).boundary(), 4u);
    EXPECT_EQ(OriginMask::from_flags({1, 1}).boundary(), 0u);
    EXPECT_THROW(OriginMask::from_flags({0, 1, 0}), std::invalid_argument);
    EXPECT_THROW(OriginMask::from_flags({0, 2}), std::invalid_argument);
}

TEST(RolloutTest, Validate) {
    Rollout r;
    r.tokens = {3, 0, 2, 1};
    r.logprobs = {-1, -1, -1, -1};
    r.mask = OriginMask::on_policy(4);
    EXPECT_NO_THROW(r.validate(8));
    EXPECT_THROW(r.validate(3), std::invalid_argument);
    r.reward = 2;
    EXPECT_THROW(r.validate(8), std::invalid_argument);
    r.reward = 1;
    r.logprobs.pop_back();
    EXPECT_THROW(r.validate(8), std::invalid_argument);
}

TEST(RolloutTest, GroupCounts) {
    RolloutGroup g;
    g.prompt_id = "p";
    for (int rw : {1, 0, 0, 1, 0}) {
        Rollout r;
        r.prompt_id = "p";
        r.reward = rw;
        g.rollouts.push_back(r);
    }
    EXPECT_EQ(g.failure_count(), 3u);
    EXPECT_EQ(g.rewards(), (std::vector<int>{1, 0, 0, 1, 0}));
    g.rollouts[2].prompt_id = "q";
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(RolloutTest, JsonlRoundTrip) {
    std::vector<Rollout> in(2);
    in[0].prompt_id = "task-3";
    in[0].cue = 5;
    in[0].tokens = {3, 0, 4, 0, 6, 1};
    in[0].logprobs = {-0.5, -0.25, -1.0, -0.125, -2.0, -0.75};
    in[0].mask = OriginMask(2, 4);
    in[0].reward = 1;
    in[1].prompt_id = "task-4";
    in[1].tokens = {};
    in[1].mask = OriginMask::on_policy(0);
    std::stringstream ss;
    write_rollouts_jsonl(ss, in);
    const std::vector<Rollout> out = read_rollouts_jsonl(ss);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].prompt_id, "task-3");
    EXPECT_EQ(out[0].cue, 5);
    EXPECT_EQ(out[0].tokens, in[0].tokens);
    EXPECT_EQ(out[0].logprobs, in[0].logprobs);
    EXPECT_EQ(out[0].mask.boundary(), 2u);
    EXPECT_EQ(out[0].reward, 1);
    EXPECT_TRUE(out[1].tokens.empty());
}

TEST(RolloutTest, JsonlRejectsBadRecords) {
    std::stringstream ss("{\"prompt_id\":\"a\",\"cue\":2,\"tokens\":[3],\"reward\":7}\n");
    EXPECT_THROW(read_rollouts_jsonl(ss), std::exception);
}

TEST(RngTest, StreamsAreReproducibleAndDistinct) {
    Rng a = Rng::stream({1, 2, 3}), b = Rng::stream({1, 2, 3}), c = Rng::stream({1, 2, 4});
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
}

TEST(RngTest, UniformIntCoversRangeInclusive) {
    Rng rng(3);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const auto v = rng.uniform_int(-2, 2);
        ASSERT_GE(v, -2);
        ASSERT_LE(v, 2);
        ++hits[static_cast<std::size_t>(v + 2)];
    }
    for (int h : hits) EXPECT_GT(h, 800);
}

TEST(RngTest, CategoricalFollowsWeights) {
    Rng rng(11);
    const std::vector<double> w{1.0, 0.0, 3.0};
    std::vector<int> hits(3, 0);
    for (int i = 0; i < 40000; ++i) ++hits[rng.categorical(w)];
    EXPECT_EQ(hits[1], 0);
    EXPECT_NEAR(hits[2] / 40000.0, 0.75, 0.01);
}

TEST(RngTest, NormalMoments) {
    Rng rng(5);
    double s = 0, s2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.02);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
