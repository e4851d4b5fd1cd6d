#include "scopelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

namespace scopelab {

namespace {

using Ngram = std::vector<Token>;

std::map<Ngram, std::size_t> ngram_counts(const TokenSeq& seq, std::size_t n) {
    std::map<Ngram, std::size_t> counts;
    if (seq.size() < n) return counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i)
        ++counts[Ngram(seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

constexpr double kBleuSmoothing = 1e-9;

}  // namespace

std::optional<double> distinct_n(const SampleSet& set, std::size_t n) {
    if (n == 0) throw std::invalid_argument("distinct_n: n must be >= 1");
    std::set<Ngram> unique;
    std::size_t total = 0;
    for (const TokenSeq& s : set) {
        if (s.size() < n) continue;
        for (std::size_t i = 0; i + n <= s.size(); ++i) {
            unique.emplace(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n));
            ++total;
        }
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double bleu(const TokenSeq& hypothesis, const std::vector<TokenSeq>& references, std::size_t max_n) {
    if (references.empty()) throw std::invalid_argument("bleu: no references");
    if (hypothesis.empty()) return 0.0;
    const std::size_t orders = std::min(max_n, hypothesis.size());
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= orders; ++n) {
        const auto hyp = ngram_counts(hypothesis, n);
        std::map<Ngram, std::size_t> max_ref;
        for (const TokenSeq& ref : references)
            for (const auto& [g, c] : ngram_counts(ref, n)) max_ref[g] = std::max(max_ref[g], c);
        std::size_t matched = 0, total = 0;
        for (const auto& [g, c] : hyp) {
            total += c;
            const auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(c, it->second);
        }
        const double precision = matched == 0 ? kBleuSmoothing
                                              : static_cast<double>(matched) / static_cast<double>(total);
        log_sum += std::log(precision);
    }
    const double hyp_len = static_cast<double>(hypothesis.size());
    std::size_t closest = references.front().size();
    for (const TokenSeq& ref : references) {
        const auto d = [&](std::size_t len) { return std::abs(static_cast<double>(len) - hyp_len); };
        if (d(ref.size()) < d(closest) || (d(ref.size()) == d(closest) && ref.size() < closest)) closest = ref.size();
    }
    const double ref_len = static_cast<double>(closest);
    const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

double self_bleu(const SampleSet& set, std::size_t max_n) {
    if (set.size() < 2) throw std::invalid_argument("self_bleu: need at least 2 samples");
    double sum = 0.0;
    std::vector<TokenSeq> refs;
    for (std::size_t i = 0; i < set.size(); ++i) {
        refs.clear();
        for (std::size_t j = 0; j < set.size(); ++j)
            if (j != i) refs.push_back(set[j]);
        sum += bleu(set[i], refs, max_n);
    }
    return sum / static_cast<double>(set.size());
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_f1(const TokenSeq& candidate, const TokenSeq& reference) {
    if (candidate.empty() || reference.empty()) return candidate.empty() && reference.empty() ? 1.0 : 0.0;
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

double self_rouge_l(const SampleSet& set) {
    if (set.size() < 2) throw std::invalid_argument("self_rouge_l: need at least 2 samples");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t j = 0; j < set.size(); ++j) {
            if (i == j) continue;
            sum += rouge_l_f1(set[i], set[j]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

std::optional<double> near_miss_at_k(const std::vector<NearMissPair>& pairs, std::size_t k) {
    if (pairs.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (const auto& [n, correct] : pairs)
        if (n <= correct + k) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double pass_at_k(const std::vector<std::vector<int>>& rewards_per_prompt, std::size_t k) {
    if (rewards_per_prompt.empty()) throw std::invalid_argument("pass_at_k: no prompts");
    std::size_t solved = 0;
    for (const auto& rewards : rewards_per_prompt) {
        if (k > rewards.size()) throw std::invalid_argument("pass_at_k: k exceeds samples per prompt");
        if (std::any_of(rewards.begin(), rewards.begin() + static_cast<std::ptrdiff_t>(k),
                        [](int r) { return r == 1; }))
            ++solved;
    }
    return static_cast<double>(solved) / static_cast<double>(rewards_per_prompt.size());
}

Percentiles percentile_summary(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("percentile_summary: no values");
    std::sort(values.begin(), values.end());
    const auto at = [&](int q) {
        // Integer arithmetic keeps ceil(q n / 100) exact.
        std::size_t rank = (static_cast<std::size_t>(q) * values.size() + 99) / 100;
        rank = std::max<std::size_t>(rank, 1);
        return values[rank - 1];
    };
    return {at(10), at(50), at(90)};
}

DivScore div_score(const DiversityComponents& c) {
    DivScore out;
    double sum = 0.0;
    int present = 0;
    for (const auto& v : {c.distinct_1, c.distinct_4, c.one_minus_self_bleu, c.one_minus_self_rouge, c.distinct_2}) {
        if (v) {
            sum += *v;
            ++present;
        } else {
            out.incomplete = true;
        }
    }
    if (present > 0) out.value = sum / present;
    return out;
}

DiversityComponents diversity_of(const SampleSet& set) {
    DiversityComponents c;
    c.distinct_1 = distinct_n(set, 1);
    c.distinct_2 = distinct_n(set, 2);
    c.distinct_4 = distinct_n(set, 4);
    if (set.size() >= 2) {
        c.one_minus_self_bleu = 1.0 - self_bleu(set);
        c.one_minus_self_rouge = 1.0 - self_rouge_l(set);
    }
    return c;
}

const char* const kMetricsHeader =
    "update,mean_reward,entropy,keep_ratio,near_miss_1,near_miss_2,near_miss_3,distinct_1,distinct_2,distinct_4,"
    "one_minus_self_bleu,one_minus_self_rouge,div_score,rectified_count";

std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string metrics_csv_line(const MetricsRow& row) {
    const auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string{}; };
    std::string s = std::to_string(row.update);
    for (const std::string& f :
         {format_real(row.mean_reward), format_real(row.entropy), opt(row.keep_ratio), opt(row.near_miss_1),
          opt(row.near_miss_2), opt(row.near_miss_3), opt(row.distinct_1), opt(row.distinct_2), opt(row.distinct_4),
          opt(row.one_minus_self_bleu), opt(row.one_minus_self_rouge), opt(row.div_score)}) {
        s += ',';
        s += f;
    }
    s += ',';
    s += std::to_string(row.rectified_count);
    return s;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << kMetricsHeader << '\n';
    for (const MetricsRow& r : rows) out << metrics_csv_line(r) << '\n';
}

}  // namespace scopelab
