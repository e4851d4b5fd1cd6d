#include "scopelab/objective.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace scopelab {

void ObjectiveConfig::validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("objective: epsilon outside (0, 1)");
    if (!(rho >= 0.0)) throw std::invalid_argument("objective: rho must be >= 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("objective: gamma must be > 0");
    if (!(advantage_epsilon >= 0.0)) throw std::invalid_argument("objective: advantage_epsilon must be >= 0");
}

AdvantageVector group_advantages(const std::vector<double>& rewards, double guard) {
    if (rewards.empty()) return {};
    double sum = 0.0;
    for (double r : rewards) sum += r;
    const double mean = sum / static_cast<double>(rewards.size());
    double ss = 0.0;
    for (double r : rewards) ss += (r - mean) * (r - mean);
    const double denom = std::sqrt(ss / static_cast<double>(rewards.size())) + guard;
    AdvantageVector a(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        const double centered = rewards[i] - mean;
        a[i] = centered == 0.0 ? 0.0 : centered / denom;
    }
    return a;
}

AdvantageVector group_advantages(const RolloutGroup& group, double guard) {
    std::vector<double> r;
    for (const Rollout& o : group.rollouts) r.push_back(static_cast<double>(o.reward));
    return group_advantages(r, guard);
}

double importance_ratio(const PolicyParams& params, const PolicySnapshot& snapshot, const Context& ctx,
                        Token token) {
    return std::exp(logprob(params, ctx, token) - logprob(snapshot.params(), ctx, token));
}

double clip_term(double ratio, double advantage, double epsilon) {
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

bool clip_uses_ratio(double ratio, double advantage, double epsilon) {
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return ratio * advantage <= clipped * advantage;
}

double shaping_weight(double p, double gamma) { return p / (p + gamma); }

ObjectiveResult scope_objective(const RolloutGroup& group, const AdvantageVector& advantages,
                                const PolicyParams& params, const PolicySnapshot& snapshot,
                                const ObjectiveConfig& cfg, const PolicyParams* shaping_reference) {
    if (advantages.size() != group.size()) throw std::invalid_argument("scope_objective: advantage count mismatch");
    const PolicyParams& ref = shaping_reference ? *shaping_reference : params;
    const std::size_t v = params.vocab_size();
    ObjectiveResult out;
    out.gradient.assign(params.size(), 0.0);
    if (group.size() == 0) return out;
    const double inv_g = 1.0 / static_cast<double>(group.size());
    const double inv_temp = 1.0 / params.temperature();

    std::vector<double> lp(v), lp_old(v), lp_ref(v);
    for (std::size_t i = 0; i < group.size(); ++i) {
        const Rollout& o = group.rollouts[i];
        const double a = advantages[i];
        const std::size_t n = o.tokens.size();
        if (o.mask.size() != n) throw std::invalid_argument("scope_objective: mask/token length mismatch");
        if (n == 0) continue;
        const double scale = inv_g / static_cast<double>(n);
        const auto ctxs = contexts_for(o.cue, o.tokens);
        double member = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const Token y = o.tokens[t];
            params.row_log_probs(ctxs[t], lp);
            double coeff;  // d(term) / d(log pi(y_t))
            if (o.mask[t] == 0) {
                snapshot.params().row_log_probs(ctxs[t], lp_old);
                const double r = std::exp(lp[y] - lp_old[y]);
                member += clip_term(r, a, cfg.clip_epsilon);
                coeff = clip_uses_ratio(r, a, cfg.clip_epsilon) ? a * r : 0.0;
            } else {
                const double p = std::exp(lp[y]);
                double w;
                if (shaping_reference) {
                    ref.row_log_probs(ctxs[t], lp_ref);
                    w = shaping_weight(std::exp(lp_ref[y]), cfg.gamma);
                } else {
                    w = shaping_weight(p, cfg.gamma);
                }
                member += cfg.rho * w * lp[y] * a;
                coeff = cfg.rho * a * w;
                if (cfg.shaping_grad == ShapingGrad::kFull) {
                    // d w / d log p = p * gamma / (p + gamma)^2
                    const double dw = p * cfg.gamma / ((p + cfg.gamma) * (p + cfg.gamma));
                    coeff += cfg.rho * a * lp[y] * dw;
                }
            }
            if (coeff == 0.0) continue;
            const std::size_t off = params.row_offset(ctxs[t]);
            const double c = coeff * scale * inv_temp;
            for (std::size_t j = 0; j < v; ++j) {
                const double indicator = j == y ? 1.0 : 0.0;
                out.gradient[off + j] += c * (indicator - std::exp(lp[j]));
            }
        }
        out.value += member * scale;
    }
    return out;
}

GradCheckReport finite_difference_check(const PolicyParams& params, const PolicySnapshot& snapshot,
                                        const RolloutGroup& group, const AdvantageVector& advantages,
                                        const ObjectiveConfig& cfg, double h, Rng& rng,
                                        std::size_t min_coords) {
    if (!(h >= 1e-6 && h <= 1e-4)) throw std::invalid_argument("finite_difference_check: h outside [1e-6, 1e-4]");
    const std::size_t v = params.vocab_size();
    const PolicyParams* reference = cfg.shaping_grad == ShapingGrad::kDetached ? &params : nullptr;
    const ObjectiveResult analytic = scope_objective(group, advantages, params, snapshot, cfg, reference);

    // Active rows, and rows feeding a ratio close to a clip boundary.
    std::set<std::size_t> rows, kink_rows;
    const double margin = 10.0 * h / params.temperature();
    for (std::size_t i = 0; i < group.size(); ++i) {
        const Rollout& o = group.rollouts[i];
        const auto ctxs = contexts_for(o.cue, o.tokens);
        for (std::size_t t = 0; t < o.tokens.size(); ++t) {
            const std::size_t off = params.row_offset(ctxs[t]);
            rows.insert(off);
            if (o.mask[t] != 0) continue;
            const double r = importance_ratio(params, snapshot, ctxs[t], o.tokens[t]);
            const double tol = margin * std::max(1.0, r);
            if (std::abs(r - (1.0 - cfg.clip_epsilon)) < tol || std::abs(r - (1.0 + cfg.clip_epsilon)) < tol)
                kink_rows.insert(off);
        }
    }
    std::vector<std::size_t> coords;
    for (std::size_t off : rows)
        for (std::size_t j = 0; j < v; ++j) coords.push_back(off + j);
    // Partial Fisher-Yates to pick a random subset.
    const std::size_t want = std::min(coords.size(), std::max(min_coords, coords.size() / 2));
    for (std::size_t i = 0; i < want; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(coords.size() - 1)));
        std::swap(coords[i], coords[j]);
    }
    coords.resize(want);

    GradCheckReport report;
    PolicyParams probe = params;
    for (std::size_t idx : coords) {
        if (kink_rows.count(idx - idx % v)) {
            ++report.skipped_near_kink;
            continue;
        }
        const double saved = probe.logits()[idx];
        probe.logits()[idx] = saved + h;
        const double up = scope_objective(group, advantages, probe, snapshot, cfg, reference).value;
        probe.logits()[idx] = saved - h;
        const double down = scope_objective(group, advantages, probe, snapshot, cfg, reference).value;
        probe.logits()[idx] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic.gradient[idx];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
        ++report.checked;
    }
    return report;
}

}  // namespace scopelab

namespace scopelab {

RandomizedGradCheck randomized_gradient_check(std::size_t instances, double h, std::uint64_t seed,
                                              const ObjectiveConfig& cfg) {
    RandomizedGradCheck out;
    out.instances = instances;
    for (std::size_t n = 0; n < instances; ++n) {
        Rng rng = Rng::stream({seed, 0x67726164ULL, n});
        const auto vocab = static_cast<std::size_t>(rng.uniform_int(4, 8));
        const auto positions = static_cast<std::size_t>(rng.uniform_int(6, 14));
        PolicyParams params(positions, vocab, rng.uniform(0.7, 1.5));
        for (double& x : params.logits()) x = 1.5 * rng.normal();
        PolicyParams old = params;
        for (double& x : old.logits()) x += 0.25 * rng.normal();
        const PolicySnapshot snapshot(old);

        RolloutGroup group;
        group.prompt_id = "gradcheck";
        const auto g = static_cast<std::size_t>(rng.uniform_int(2, 8));
        std::vector<double> rewards;
        for (std::size_t i = 0; i < g; ++i) {
            const auto cue = static_cast<Token>(rng.uniform_int(kFirstContentToken, static_cast<std::int64_t>(vocab) - 1));
            Rollout r = sample_rollout(old, group.prompt_id, cue, positions, rng);
            if (rng.uniform() < 0.4) {
                const auto c = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(r.tokens.size())));
                r.mask = OriginMask(c, r.tokens.size() - c);
            }
            r.reward = rng.uniform() < 0.5 ? 1 : 0;
            rewards.push_back(r.reward);
            group.rollouts.push_back(std::move(r));
        }
        const AdvantageVector adv = group_advantages(rewards, cfg.advantage_epsilon);
        const GradCheckReport rep = finite_difference_check(params, snapshot, group, adv, cfg, h, rng);
        out.max_relative_error = std::max(out.max_relative_error, rep.max_relative_error);
        out.checked += rep.checked;
        out.skipped_near_kink += rep.skipped_near_kink;
    }
    return out;
}

}  // namespace scopelab
