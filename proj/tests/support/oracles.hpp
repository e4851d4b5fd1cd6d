#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. They are written from the metric and selection definitions directly
// and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "scopelab/trajectory.hpp"

namespace oracle {

using Seq = std::vector<scopelab::Token>;

inline std::string key_of(const Seq& s, std::size_t from, std::size_t n) {
    std::string k;
    for (std::size_t i = from; i < from + n; ++i) k += std::to_string(s[i]) + ",";
    return k;
}

/// Hash-set distinct-n; returns -1 when the set has no n-gram.
inline double distinct_n(const std::vector<Seq>& set, std::size_t n) {
    std::unordered_set<std::string> seen;
    std::size_t total = 0;
    for (const Seq& s : set)
        for (std::size_t i = 0; i + n <= s.size(); ++i) {
            seen.insert(key_of(s, i, n));
            ++total;
        }
    return total == 0 ? -1.0 : static_cast<double>(seen.size()) / static_cast<double>(total);
}

inline std::size_t occurrences(const Seq& s, const Seq& s_src, std::size_t from, std::size_t n) {
    std::size_t c = 0;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
        bool eq = true;
        for (std::size_t t = 0; t < n && eq; ++t) eq = s[i + t] == s_src[from + t];
        c += eq;
    }
    return c;
}

/// Sentence BLEU against pooled references, counted by rescanning.
inline long double bleu(const Seq& hyp, const std::vector<Seq>& refs, std::size_t max_n = 4) {
    if (hyp.empty()) return 0.0L;
    const std::size_t orders = std::min(max_n, hyp.size());
    long double prod = 1.0L;
    for (std::size_t n = 1; n <= orders; ++n) {
        std::size_t total = hyp.size() - n + 1, matched = 0;
        std::unordered_set<std::string> done;
        for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
            if (!done.insert(key_of(hyp, i, n)).second) continue;
            const std::size_t in_hyp = occurrences(hyp, hyp, i, n);
            std::size_t best = 0;
            for (const Seq& r : refs) best = std::max(best, occurrences(r, hyp, i, n));
            matched += std::min(in_hyp, best);
        }
        const long double p = matched == 0 ? 1e-9L : static_cast<long double>(matched) / total;
        prod *= p;
    }
    const long double geo = std::pow(prod, 1.0L / static_cast<long double>(orders));
    // closest reference length, shorter one on ties
    long double c = static_cast<long double>(hyp.size()), r = -1.0L;
    for (const Seq& ref : refs) {
        const long double len = static_cast<long double>(ref.size());
        if (r < 0 || std::fabs(len - c) < std::fabs(r - c) || (std::fabs(len - c) == std::fabs(r - c) && len < r))
            r = len;
    }
    const long double bp = c > r ? 1.0L : std::exp(1.0L - r / c);
    return bp * geo;
}

inline long double self_bleu(const std::vector<Seq>& set) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < set.size(); ++i) {
        std::vector<Seq> refs;
        for (std::size_t j = 0; j < set.size(); ++j)
            if (j != i) refs.push_back(set[j]);
        s += bleu(set[i], refs);
    }
    return s / set.size();
}

/// Full-table LCS.
inline std::size_t lcs(const Seq& a, const Seq& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = a.size(); i-- > 0;)
        for (std::size_t j = b.size(); j-- > 0;)
            t[i][j] = a[i] == b[j] ? t[i + 1][j + 1] + 1 : std::max(t[i + 1][j], t[i][j + 1]);
    return t[0][0];
}

inline long double rouge_l(const Seq& cand, const Seq& ref) {
    if (cand.empty() && ref.empty()) return 1.0L;
    const long double l = static_cast<long double>(lcs(cand, ref));
    if (l == 0) return 0.0L;
    const long double p = l / cand.size(), r = l / ref.size();
    return (1 + 1) * p * r / (r + p);
}

inline long double self_rouge(const std::vector<Seq>& set) {
    long double s = 0.0L;
    std::size_t n = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t j = 0; j < set.size(); ++j)
            if (i != j) {
                s += rouge_l(set[i], set[j]);
                ++n;
            }
    return s / n;
}

inline double near_miss(const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t k) {
    std::size_t hit = 0;
    for (const auto& [n, c] : pairs) hit += static_cast<long>(n) - static_cast<long>(c) <= static_cast<long>(k);
    return static_cast<double>(hit) / static_cast<double>(pairs.size());
}

inline double pass_at(const std::vector<std::vector<int>>& rewards, std::size_t k) {
    std::size_t solved = 0;
    for (const auto& row : rewards) {
        bool any = false;
        for (std::size_t i = 0; i < k; ++i) any = any || row[i] == 1;
        solved += any;
    }
    return static_cast<double>(solved) / static_cast<double>(rewards.size());
}

// Selection score of one failing rollout from raw counts.
struct Candidate {
    std::size_t steps, tokens, k, c;
};

inline long double mean_of(const std::vector<long double>& v) {
    long double s = 0;
    for (auto x : v) s += x;
    return s / v.size();
}
inline long double pop_std(const std::vector<long double>& v) {
    const long double m = mean_of(v);
    long double s = 0;
    for (auto x : v) s += (x - m) * (x - m);
    return std::sqrt(s / v.size());
}
inline long double weight(long double x, long double mu, long double sd) {
    if (sd == 0) return x == mu ? 1.0L : 0.0L;
    return std::exp(-(x - mu) * (x - mu) / (2 * sd * sd));
}

/// Scores of the failing members (index-aligned; -1 for successes) and the argmax.
/// `all_steps` / `all_tokens` cover every member, successes included.
inline std::pair<std::vector<long double>, std::size_t> select(const std::vector<long double>& all_steps,
                                                               const std::vector<long double>& all_tokens,
                                                               const std::vector<int>& rewards,
                                                               const std::vector<Candidate>& cand) {
    const long double mm = mean_of(all_steps), sm = pop_std(all_steps);
    const long double ml = mean_of(all_tokens), sl = pop_std(all_tokens);
    std::vector<long double> s(rewards.size(), -1.0L);
    std::size_t best = rewards.size();
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        if (rewards[i] != 0) continue;
        const Candidate& x = cand[i];
        const long double prog = static_cast<long double>(x.k) / x.steps + static_cast<long double>(x.c) / x.tokens;
        s[i] = weight(x.steps, mm, sm) * weight(x.tokens, ml, sl) * prog;
        if (best == rewards.size() || s[i] > s[best]) best = i;
    }
    return {s, best};
}

}  // namespace oracle
