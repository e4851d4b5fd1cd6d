#include "scopelab/trajectory.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace scopelab {

std::vector<Step> segment_steps(const TokenSeq& tokens) {
    std::vector<Step> steps;
    Step current;
    for (Token t : tokens) {
        if (t == kDelimiter) {
            if (!current.empty()) steps.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(t);
        }
    }
    if (!current.empty()) steps.push_back(std::move(current));
    return steps;
}

TokenSeq join_steps(const std::vector<Step>& steps) {
    TokenSeq out;
    out.reserve(joined_length(steps));
    for (std::size_t m = 0; m < steps.size(); ++m) {
        const Step& s = steps[m];
        if (s.empty()) throw std::invalid_argument("join_steps: empty step");
        if (std::find(s.begin(), s.end(), kDelimiter) != s.end())
            throw std::invalid_argument("join_steps: step contains the delimiter token");
        if (m > 0) out.push_back(kDelimiter);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

std::size_t joined_length(const std::vector<Step>& steps) {
    std::size_t n = 0;
    for (const Step& s : steps) n += s.size();
    return steps.empty() ? 0 : n + steps.size() - 1;
}

OriginMask::OriginMask(std::size_t on_policy, std::size_t off_policy)
    : flags_(on_policy + off_policy, 0), boundary_(on_policy) {
    std::fill(flags_.begin() + static_cast<std::ptrdiff_t>(on_policy), flags_.end(), 1);
}

OriginMask OriginMask::from_flags(std::vector<std::uint8_t> flags) {
    std::size_t boundary = flags.size();
    for (std::size_t t = 0; t < flags.size(); ++t) {
        if (flags[t] > 1) throw std::invalid_argument("origin mask flags must be 0 or 1");
        if (flags[t] == 1 && boundary == flags.size()) boundary = t;
        if (flags[t] == 0 && boundary != flags.size())
            throw std::invalid_argument("origin mask is not a step function");
    }
    OriginMask m;
    m.flags_ = std::move(flags);
    m.boundary_ = boundary;
    return m;
}

void Rollout::validate(std::size_t vocab_size) const {
    if (logprobs.size() != tokens.size())
        throw std::invalid_argument("rollout: logprobs/tokens length mismatch");
    if (reward != 0 && reward != 1) throw std::invalid_argument("rollout: reward must be 0 or 1");
    if (mask.size() != tokens.size())
        throw std::invalid_argument("rollout: mask/tokens length mismatch");
    for (Token t : tokens)
        if (t >= vocab_size) throw std::invalid_argument("rollout: token id out of range");
    if (cue >= vocab_size) throw std::invalid_argument("rollout: cue id out of range");
}

std::vector<int> RolloutGroup::rewards() const {
    std::vector<int> r;
    r.reserve(rollouts.size());
    for (const Rollout& o : rollouts) r.push_back(o.reward);
    return r;
}

std::size_t RolloutGroup::failure_count() const {
    return static_cast<std::size_t>(std::count_if(rollouts.begin(), rollouts.end(),
                                                  [](const Rollout& o) { return o.reward == 0; }));
}

void RolloutGroup::validate() const {
    if (rollouts.size() < 2) throw std::invalid_argument("rollout group needs at least 2 members");
    for (const Rollout& o : rollouts)
        if (o.prompt_id != prompt_id)
            throw std::invalid_argument("rollout group members must share prompt_id");
}

std::string rollout_to_json_line(const Rollout& rollout) {
    nlohmann::json j;
    j["prompt_id"] = rollout.prompt_id;
    j["cue"] = rollout.cue;
    j["tokens"] = rollout.tokens;
    nlohmann::json bounds = nlohmann::json::array();
    std::size_t begin = 0;
    for (std::size_t t = 0; t <= rollout.tokens.size(); ++t) {
        if (t == rollout.tokens.size() || rollout.tokens[t] == kDelimiter) {
            if (t > begin) bounds.push_back({begin, t});
            begin = t + 1;
        }
    }
    j["steps"] = std::move(bounds);
    j["reward"] = rollout.reward;
    j["logprobs"] = rollout.logprobs;
    if (rollout.mask.boundary() < rollout.mask.size()) j["mask_boundary"] = rollout.mask.boundary();
    return j.dump();
}

Rollout rollout_from_json_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    Rollout r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.cue = j.value("cue", static_cast<Token>(kFirstContentToken));
    r.tokens = j.at("tokens").get<TokenSeq>();
    r.reward = j.at("reward").get<int>();
    if (j.contains("logprobs")) r.logprobs = j.at("logprobs").get<std::vector<double>>();
    else r.logprobs.assign(r.tokens.size(), 0.0);
    const std::size_t boundary = j.value("mask_boundary", r.tokens.size());
    if (boundary > r.tokens.size()) throw std::invalid_argument("rollout record: mask_boundary out of range");
    r.mask = OriginMask(boundary, r.tokens.size() - boundary);
    if (r.logprobs.size() != r.tokens.size())
        throw std::invalid_argument("rollout record: logprobs/tokens length mismatch");
    if (r.reward != 0 && r.reward != 1) throw std::invalid_argument("rollout record: reward must be 0 or 1");
    return r;
}

void write_rollouts_jsonl(std::ostream& out, const std::vector<Rollout>& rollouts) {
    for (const Rollout& r : rollouts) out << rollout_to_json_line(r) << '\n';
}

std::vector<Rollout> read_rollouts_jsonl(std::istream& in) {
    std::vector<Rollout> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(rollout_from_json_line(line));
        } catch (const std::exception& e) {
            throw std::runtime_error("rollout jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace scopelab
