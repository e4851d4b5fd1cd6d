#include "scopelab/env.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace scopelab {

namespace {

constexpr std::size_t kNoBlock = std::numeric_limits<std::size_t>::max();

void shuffle(std::vector<Token>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(v[i - 1], v[j]);
    }
}

void index_blocks(Layer& layer, std::size_t vocab_size) {
    layer.block_of.assign(vocab_size, kNoBlock);
    for (std::size_t b = 0; b < layer.blocks.size(); ++b)
        for (Token t : layer.blocks[b].tokens) layer.block_of[t] = b;
}

void check_world_config(const WorldConfig& cfg) {
    if (cfg.vocab_size < kFirstContentToken + 2)
        throw std::invalid_argument("world: vocabulary needs at least two content tokens");
    if (cfg.vocab_size > 256) throw std::invalid_argument("world: vocabulary larger than 256");
    if (cfg.min_depth < 2 || cfg.max_depth < cfg.min_depth)
        throw std::invalid_argument("world: need 2 <= min_depth <= max_depth");
    if (!(cfg.terminal_probability >= 0.0 && cfg.terminal_probability <= 1.0))
        throw std::invalid_argument("world: terminal_probability outside [0, 1]");
}

}  // namespace

ChainWorld ChainWorld::generate(const WorldConfig& cfg, std::uint64_t seed) {
    check_world_config(cfg);
    Rng rng = Rng::stream({seed, 0x776f726cULL});
    ChainWorld w;
    w.cfg_ = cfg;
    w.seed_ = seed;
    w.layers_.resize(cfg.max_depth + 1);

    std::vector<Token> content;
    for (std::size_t t = kFirstContentToken; t < cfg.vocab_size; ++t) content.push_back(static_cast<Token>(t));
    // Inner layers keep about two thirds as many blocks as tokens, so some
    // steps have aliases while distinct chains stay apart.
    const std::size_t inner_blocks = (2 * content.size() + 2) / 3;

    for (std::size_t m = 1; m <= cfg.max_depth; ++m) {
        Layer& layer = w.layers_[m];
        std::vector<Token> order = content;
        shuffle(order, rng);
        const bool last = m == cfg.max_depth;
        const std::size_t n_blocks = last ? content.size() : inner_blocks;
        std::vector<std::size_t> sizes(n_blocks, 1);
        for (std::size_t extra = content.size() - n_blocks; extra > 0; --extra) {
            std::size_t b;
            do {
                b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_blocks) - 1));
            } while (sizes[b] == 3);
            ++sizes[b];
        }
        std::size_t i = 0;
        for (std::size_t size : sizes) {
            Block b;
            b.tokens.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                            order.begin() + static_cast<std::ptrdiff_t>(i + size));
            std::sort(b.tokens.begin(), b.tokens.end());
            layer.blocks.push_back(std::move(b));
            i += size;
        }
        std::sort(layer.blocks.begin(), layer.blocks.end(),
                  [](const Block& a, const Block& b) { return a.tokens.front() < b.tokens.front(); });
        if (last) {
            for (Block& b : layer.blocks) b.terminal = true;
        } else if (m >= cfg.min_depth) {
            for (Block& b : layer.blocks)
                b.terminal = b.tokens.size() == 1 && rng.uniform() < cfg.terminal_probability;
            const bool any_open = std::any_of(layer.blocks.begin(), layer.blocks.end(),
                                              [](const Block& b) { return !b.terminal; });
            if (!any_open) layer.blocks.back().terminal = false;
        }
        index_blocks(layer, cfg.vocab_size);
    }

    // Transitions are injective whenever the next layer has room, so chains
    // only merge when they must.
    const auto injection = [&](std::size_t count, std::size_t range) {
        std::vector<std::size_t> targets(range);
        for (std::size_t j = 0; j < range; ++j) targets[j] = j;
        for (std::size_t j = range; j > 1; --j)
            std::swap(targets[j - 1], targets[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j) - 1))]);
        std::vector<std::size_t> out(count);
        for (std::size_t j = 0; j < count; ++j)
            out[j] = j < range ? targets[j]
                               : static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(range) - 1));
        return out;
    };
    for (std::size_t m = 1; m < cfg.max_depth; ++m) {
        std::vector<Block*> open;
        for (Block& b : w.layers_[m].blocks)
            if (!b.terminal) open.push_back(&b);
        const auto next = injection(open.size(), w.layers_[m + 1].blocks.size());
        for (std::size_t j = 0; j < open.size(); ++j) open[j]->next = next[j];
    }
    w.start_.assign(cfg.vocab_size, kNoBlock);
    std::vector<Token> cues = content;
    shuffle(cues, rng);
    const auto first = injection(cues.size(), w.layers_[1].blocks.size());
    for (std::size_t j = 0; j < cues.size(); ++j) w.start_[cues[j]] = first[j];
    return w;
}

ChainWorld ChainWorld::from_parts(WorldConfig cfg, std::uint64_t seed, std::vector<Layer> layers,
                                  std::vector<std::size_t> start) {
    check_world_config(cfg);
    if (layers.size() != cfg.max_depth + 1 || start.size() != cfg.vocab_size)
        throw std::invalid_argument("world: layer/start table size mismatch");
    ChainWorld w;
    w.cfg_ = cfg;
    w.seed_ = seed;
    w.layers_ = std::move(layers);
    w.start_ = std::move(start);
    for (std::size_t m = 1; m <= cfg.max_depth; ++m) {
        Layer& layer = w.layers_[m];
        std::vector<int> seen(cfg.vocab_size, 0);
        for (const Block& b : layer.blocks) {
            if (b.tokens.empty()) throw std::invalid_argument("world: empty block");
            if (b.terminal && b.tokens.size() != 1)
                throw std::invalid_argument("world: terminal block must be a singleton");
            if (!b.terminal && (m == cfg.max_depth || b.next >= w.layers_[m + 1].blocks.size()))
                throw std::invalid_argument("world: dangling transition");
            for (Token t : b.tokens) {
                if (t < kFirstContentToken || t >= cfg.vocab_size || seen[t]++)
                    throw std::invalid_argument("world: blocks must partition the content tokens");
            }
        }
        index_blocks(layer, cfg.vocab_size);
    }
    for (std::size_t t = kFirstContentToken; t < cfg.vocab_size; ++t)
        if (w.start_[t] >= w.layers_[1].blocks.size()) throw std::invalid_argument("world: bad start table");
    return w;
}

std::vector<Token> ChainWorld::grammatical_next(std::size_t position, Token prev) const {
    if (prev < kFirstContentToken || prev >= cfg_.vocab_size) return {};
    const std::size_t j = position / 2;
    if (position % 2 == 0) {
        // Start of step j+1; prev lives in layer j (the cue when j == 0).
        if (j + 1 > cfg_.max_depth) return {};
        std::size_t target;
        if (j == 0) {
            target = start_[prev];
        } else {
            const Block& from = layers_[j].blocks[layers_[j].block_of[prev]];
            if (from.terminal) return {};
            target = from.next;
        }
        return layers_[j + 1].blocks[target].tokens;
    }
    // Right after the token of step j+1.
    const std::size_t m = j + 1;
    if (m > cfg_.max_depth) return {};
    const Block& here = layers_[m].blocks[layers_[m].block_of[prev]];
    return {here.terminal ? kAnswerMarker : kDelimiter};
}

bool ChainTask::step_is_accepted(std::size_t m, const Step& step) const {
    if (m >= accepted.size()) return false;
    return std::binary_search(accepted[m].begin(), accepted[m].end(), step);
}

std::size_t ChainTask::correct_prefix_length(const std::vector<Step>& steps) const {
    std::size_t k = 0;
    while (k < steps.size() && step_is_accepted(k, steps[k])) ++k;
    return k;
}

void ChainTask::validate() const {
    if (depth < 1 || accepted.size() != depth) throw std::invalid_argument("task: depth/accepted mismatch");
    for (std::size_t m = 0; m < depth; ++m) {
        if (accepted[m].empty()) throw std::invalid_argument("task: empty accepted set");
        if (!std::is_sorted(accepted[m].begin(), accepted[m].end()))
            throw std::invalid_argument("task: accepted set not sorted");
        for (const Step& s : accepted[m]) {
            if (s.empty() || std::find(s.begin(), s.end(), kDelimiter) != s.end())
                throw std::invalid_argument("task: malformed accepted step");
        }
    }
    const Step answer_step{answer, kAnswerMarker};
    if (accepted.back() != std::vector<Step>{answer_step})
        throw std::invalid_argument("task: last accepted set must be the answer step");
}

ChainTask make_task(const ChainWorld& world, std::string prompt_id, Token cue) {
    if (cue < kFirstContentToken || cue >= world.vocab_size())
        throw std::invalid_argument("make_task: cue must be a content token");
    ChainTask task;
    task.prompt_id = std::move(prompt_id);
    task.cue = cue;
    std::size_t b = world.start()[cue];
    for (std::size_t m = 1; m <= world.config().max_depth; ++m) {
        const Block& block = world.layers()[m].blocks[b];
        if (block.terminal) {
            task.answer = block.tokens.front();
            task.accepted.push_back({Step{task.answer, kAnswerMarker}});
            task.depth = m;
            return task;
        }
        std::vector<Step> options;
        for (Token t : block.tokens) options.push_back(Step{t});
        task.accepted.push_back(std::move(options));
        b = block.next;
    }
    throw std::logic_error("make_task: chain did not terminate");
}

TaskBank TaskBank::generate(const ChainWorld& world, std::size_t count, std::uint64_t seed,
                            const std::string& prefix) {
    Rng rng = Rng::stream({seed, 0x7461736bULL});
    TaskBank bank{world, {}};
    bank.tasks.reserve(count);
    const auto hi = static_cast<std::int64_t>(world.vocab_size() - 1);
    for (std::size_t i = 0; i < count; ++i) {
        const auto cue = static_cast<Token>(rng.uniform_int(kFirstContentToken, hi));
        bank.tasks.push_back(make_task(world, prefix + std::to_string(i), cue));
    }
    return bank;
}

const ChainTask& TaskBank::find(const std::string& prompt_id) const {
    for (const ChainTask& t : tasks)
        if (t.prompt_id == prompt_id) return t;
    throw std::out_of_range("task bank: unknown prompt_id '" + prompt_id + "'");
}

void write_task_bank(std::ostream& out, const TaskBank& bank) {
    const ChainWorld& w = bank.world;
    nlohmann::json j;
    j["format"] = "scopelab-task-bank/1";
    j["seed"] = w.seed();
    j["vocab_size"] = w.vocab_size();
    j["min_depth"] = w.config().min_depth;
    j["max_depth"] = w.config().max_depth;
    j["terminal_probability"] = w.config().terminal_probability;
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t m = 1; m < w.layers().size(); ++m) {
        nlohmann::json blocks = nlohmann::json::array();
        for (const Block& b : w.layers()[m].blocks)
            blocks.push_back({{"tokens", b.tokens}, {"terminal", b.terminal}, {"next", b.next}});
        layers.push_back(std::move(blocks));
    }
    j["layers"] = std::move(layers);
    std::vector<std::size_t> start;
    for (std::size_t t = kFirstContentToken; t < w.vocab_size(); ++t) start.push_back(w.start()[t]);
    j["start"] = start;
    nlohmann::json tasks = nlohmann::json::array();
    for (const ChainTask& t : bank.tasks) {
        tasks.push_back({{"prompt_id", t.prompt_id},
                         {"cue", t.cue},
                         {"depth", t.depth},
                         {"answer", t.answer},
                         {"accepted", t.accepted}});
    }
    j["tasks"] = std::move(tasks);
    out << j.dump(1) << '\n';
}

TaskBank read_task_bank(std::istream& in) {
    nlohmann::json j;
    in >> j;
    if (j.value("format", std::string{}) != "scopelab-task-bank/1")
        throw std::invalid_argument("task bank: unrecognized format tag");
    WorldConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.min_depth = j.at("min_depth").get<std::size_t>();
    cfg.max_depth = j.at("max_depth").get<std::size_t>();
    cfg.terminal_probability = j.at("terminal_probability").get<double>();
    std::vector<Layer> layers(1);
    for (const auto& jl : j.at("layers")) {
        Layer layer;
        for (const auto& jb : jl) {
            Block b;
            b.tokens = jb.at("tokens").get<std::vector<Token>>();
            b.terminal = jb.at("terminal").get<bool>();
            b.next = jb.at("next").get<std::size_t>();
            layer.blocks.push_back(std::move(b));
        }
        layers.push_back(std::move(layer));
    }
    const auto start_content = j.at("start").get<std::vector<std::size_t>>();
    std::vector<std::size_t> start(cfg.vocab_size, kNoBlock);
    if (start_content.size() + kFirstContentToken != cfg.vocab_size)
        throw std::invalid_argument("task bank: start table size mismatch");
    std::copy(start_content.begin(), start_content.end(), start.begin() + kFirstContentToken);
    TaskBank bank{ChainWorld::from_parts(cfg, j.at("seed").get<std::uint64_t>(), std::move(layers),
                                         std::move(start)),
                  {}};
    for (const auto& jt : j.at("tasks")) {
        ChainTask t;
        t.prompt_id = jt.at("prompt_id").get<std::string>();
        t.cue = jt.at("cue").get<Token>();
        t.depth = jt.at("depth").get<std::size_t>();
        t.answer = jt.at("answer").get<Token>();
        t.accepted = jt.at("accepted").get<std::vector<std::vector<Step>>>();
        t.validate();
        bank.tasks.push_back(std::move(t));
    }
    return bank;
}

PRMNoise::PRMNoise(double eta_value) : eta(eta_value) {
    if (!(eta >= 0.0 && eta < 0.5)) throw std::invalid_argument("PRM noise eta must lie in [0, 0.5)");
}

int verify(const ChainTask& task, const TokenSeq& tokens) {
    const std::size_t n = tokens.size();
    if (n < 2 || tokens[n - 1] != kAnswerMarker) return 0;
    // The answer slot is step D: the final step must be exactly [answer, marker]
    // and be the D-th step. What the earlier steps say is not inspected.
    const std::vector<Step> steps = segment_steps(tokens);
    if (steps.size() != task.depth) return 0;
    return steps.back() == Step{task.answer, kAnswerMarker} ? 1 : 0;
}

std::vector<double> oracle_step_scores(const ChainTask& task, const std::vector<Step>& steps,
                                       const PRMNoise& noise, Rng& rng) {
    const std::size_t correct = task.correct_prefix_length(steps);
    std::vector<double> scores(steps.size());
    for (std::size_t m = 0; m < steps.size(); ++m) {
        double s = m < correct ? 1.0 - noise.eta : noise.eta;
        if (noise.eta > 0.0) s += rng.uniform(-0.5 * noise.eta, 0.5 * noise.eta);
        scores[m] = std::clamp(s, 0.0, 1.0);
    }
    return scores;
}

Refinement oracle_refine(const ChainTask& task, const std::vector<Step>& prefix_steps) {
    Refinement r;
    r.kept = std::min(task.correct_prefix_length(prefix_steps), task.depth);
    for (std::size_t m = r.kept; m < task.depth; ++m) r.continuation.push_back(task.accepted[m].front());
    return r;
}

}  // namespace scopelab
