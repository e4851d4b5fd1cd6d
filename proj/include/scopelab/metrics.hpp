#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scopelab/trajectory.hpp"

namespace scopelab {

/// K token sequences generated for one prompt.
using SampleSet = std::vector<TokenSeq>;

/// Unique n-grams / total n-grams, pooled over the set. Empty when no
/// sequence has n tokens.
std::optional<double> distinct_n(const SampleSet& set, std::size_t n);

/// BLEU of `hypothesis` against all `references` jointly: clipped n-gram
/// precisions up to max_n (counts clipped by the max reference count), zero
/// precisions replaced by 1e-9, closest-reference-length brevity penalty.
/// Orders longer than the hypothesis are left out of the geometric mean.
double bleu(const TokenSeq& hypothesis, const std::vector<TokenSeq>& references, std::size_t max_n = 4);

/// Mean BLEU of each member against the remaining K-1. Throws for K < 2.
double self_bleu(const SampleSet& set, std::size_t max_n = 4);

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);
/// ROUGE-L F1 of `candidate` against `reference`.
double rouge_l_f1(const TokenSeq& candidate, const TokenSeq& reference);
/// Mean ROUGE-L F1 over ordered pairs (i, j != i). Throws for K < 2.
double self_rouge_l(const SampleSet& set);

/// (judged step total N, correct-prefix length K) of one zero-reward rollout.
using NearMissPair = std::pair<std::size_t, std::size_t>;
/// Fraction of pairs with N - K <= k; empty for an empty set.
std::optional<double> near_miss_at_k(const std::vector<NearMissPair>& pairs, std::size_t k);

/// Fraction of prompts with a reward-1 sample among their first k samples.
double pass_at_k(const std::vector<std::vector<int>>& rewards_per_prompt, std::size_t k);

struct Percentiles {
    double p10 = 0.0, p50 = 0.0, p90 = 0.0;
};
/// Nearest-rank percentiles (rank = ceil(q * n), 1-based).
Percentiles percentile_summary(std::vector<double> values);

struct DiversityComponents {
    std::optional<double> distinct_1, distinct_2, distinct_4, one_minus_self_bleu, one_minus_self_rouge;
};
struct DivScore {
    std::optional<double> value;
    bool incomplete = false;  // some component was absent and left out
};
DivScore div_score(const DiversityComponents& c);

/// All diversity components for one sample set (self-similarity ones need K >= 2).
DiversityComponents diversity_of(const SampleSet& set);

struct MetricsRow {
    std::size_t update = 0;
    double mean_reward = 0.0;
    double entropy = 0.0;
    std::optional<double> keep_ratio;
    std::optional<double> near_miss_1, near_miss_2, near_miss_3;
    std::optional<double> distinct_1, distinct_2, distinct_4;
    std::optional<double> one_minus_self_bleu, one_minus_self_rouge;
    std::optional<double> div_score;
    std::size_t rectified_count = 0;
};

extern const char* const kMetricsHeader;
/// One CSV line (no newline). Reals use "%.17g"; absent values are empty.
std::string metrics_csv_line(const MetricsRow& row);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// "%.17g" formatting used by every numeric file the tools emit.
std::string format_real(double x);

}  // namespace scopelab
