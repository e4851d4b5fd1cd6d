#include "scopelab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>

extern char** environ;

namespace scopelab {

namespace {

struct Field {
    const char* section;
    const char* key;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

[[noreturn]] void bad(const std::string& msg) { throw std::invalid_argument(msg); }

double parse_real(const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end || !std::isfinite(v)) bad("expected a real number, got '" + s + "'");
    return v;
}

std::uint64_t parse_uint(const std::string& s) {
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end) bad("expected a non-negative integer, got '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    bad("expected true or false, got '" + s + "'");
}

std::string fmt(double x) { return format_real(x); }
std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(bool b) { return b ? "true" : "false"; }

// Field helpers. `check` returns an error message or nullptr.
template <typename Member>
Field real_field(const char* section, const char* key, Member member,
                 std::function<const char*(double)> check = nullptr) {
    return {section, key,
            [=](TrainConfig& c, const std::string& v) {
                const double x = parse_real(v);
                if (check)
                    if (const char* err = check(x)) bad(std::string(key) + " " + err);
                std::invoke(member, c) = x;
            },
            [=](const TrainConfig& c) { return fmt(std::invoke(member, const_cast<TrainConfig&>(c))); }};
}

template <typename Member>
Field uint_field(const char* section, const char* key, Member member, std::uint64_t min_value = 0) {
    return {section, key,
            [=](TrainConfig& c, const std::string& v) {
                const std::uint64_t x = parse_uint(v);
                if (x < min_value) bad(std::string(key) + " must be >= " + std::to_string(min_value));
                std::invoke(member, c) = static_cast<std::remove_reference_t<decltype(std::invoke(member, c))>>(x);
            },
            [=](const TrainConfig& c) {
                return fmt(static_cast<std::uint64_t>(std::invoke(member, const_cast<TrainConfig&>(c))));
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        // [env]
        f.push_back(uint_field("env", "vocab_size", [](TrainConfig& c) -> std::size_t& { return c.world.vocab_size; }, 4));
        f.push_back(uint_field("env", "min_depth", [](TrainConfig& c) -> std::size_t& { return c.world.min_depth; }, 2));
        f.push_back(uint_field("env", "max_depth", [](TrainConfig& c) -> std::size_t& { return c.world.max_depth; }, 2));
        f.push_back(real_field("env", "terminal_probability",
                               [](TrainConfig& c) -> double& { return c.world.terminal_probability; },
                               [](double x) { return x >= 0.0 && x <= 1.0 ? nullptr : "must be in [0, 1]"; }));
        f.push_back(uint_field("env", "world_seed", [](TrainConfig& c) -> std::uint64_t& { return c.world_seed; }));
        f.push_back(uint_field("env", "bank_size", [](TrainConfig& c) -> std::size_t& { return c.bank_size; }, 1));
        f.push_back(real_field("env", "eta", [](TrainConfig& c) -> double& { return c.eta; },
                               [](double x) { return x >= 0.0 && x < 0.5 ? nullptr : "must be in [0, 0.5)"; }));
        f.push_back(uint_field("env", "eval_tasks", [](TrainConfig& c) -> std::size_t& { return c.eval_tasks; }));
        f.push_back(uint_field("env", "eval_samples", [](TrainConfig& c) -> std::size_t& { return c.eval_samples; }, 1));
        // [policy]
        f.push_back(real_field("policy", "temperature", [](TrainConfig& c) -> double& { return c.temperature; },
                               [](double x) { return x > 0.0 ? nullptr : "must be > 0"; }));
        f.push_back(uint_field("policy", "max_tokens", [](TrainConfig& c) -> std::size_t& { return c.max_tokens; }, 1));
        f.push_back(real_field("policy", "prior_grammar", [](TrainConfig& c) -> double& { return c.prior.grammar_bonus; }));
        f.push_back(real_field("policy", "prior_habit", [](TrainConfig& c) -> double& { return c.prior.habit_bonus; }));
        f.push_back(real_field("policy", "prior_noise", [](TrainConfig& c) -> double& { return c.prior.noise; },
                               [](double x) { return x >= 0.0 ? nullptr : "must be >= 0"; }));
        // [objective]
        f.push_back(real_field("objective", "epsilon", [](TrainConfig& c) -> double& { return c.objective.clip_epsilon; },
                               [](double x) { return x > 0.0 && x < 1.0 ? nullptr : "must be in (0, 1)"; }));
        f.push_back(real_field("objective", "rho", [](TrainConfig& c) -> double& { return c.objective.rho; },
                               [](double x) { return x >= 0.0 ? nullptr : "must be >= 0"; }));
        f.push_back(real_field("objective", "gamma", [](TrainConfig& c) -> double& { return c.objective.gamma; },
                               [](double x) { return x > 0.0 ? nullptr : "must be > 0"; }));
        f.push_back(real_field("objective", "advantage_epsilon",
                               [](TrainConfig& c) -> double& { return c.objective.advantage_epsilon; },
                               [](double x) { return x >= 0.0 ? nullptr : "must be >= 0"; }));
        f.push_back({"objective", "shaping_grad",
                     [](TrainConfig& c, const std::string& v) {
                         if (v == "detached") c.objective.shaping_grad = ShapingGrad::kDetached;
                         else if (v == "full") c.objective.shaping_grad = ShapingGrad::kFull;
                         else bad("shaping_grad must be detached or full, got '" + v + "'");
                     },
                     [](const TrainConfig& c) { return std::string(to_string(c.objective.shaping_grad)); }});
        // [trainer]
        f.push_back({"trainer", "algorithm",
                     [](TrainConfig& c, const std::string& v) {
                         if (v == "grpo") c.algorithm = Algorithm::kGrpo;
                         else if (v == "scope") c.algorithm = Algorithm::kScope;
                         else bad("algorithm must be grpo or scope, got '" + v + "'");
                     },
                     [](const TrainConfig& c) { return std::string(to_string(c.algorithm)); }});
        f.push_back(uint_field("trainer", "group_size", [](TrainConfig& c) -> std::size_t& { return c.group_size; }, 2));
        f.push_back(uint_field("trainer", "tasks_per_update",
                               [](TrainConfig& c) -> std::size_t& { return c.tasks_per_update; }, 1));
        f.push_back(real_field("trainer", "learning_rate", [](TrainConfig& c) -> double& { return c.learning_rate; },
                               [](double x) { return x > 0.0 ? nullptr : "must be > 0"; }));
        f.push_back(uint_field("trainer", "updates", [](TrainConfig& c) -> std::size_t& { return c.updates; }, 1));
        f.push_back(real_field("trainer", "tau", [](TrainConfig& c) -> double& { return c.tau; },
                               [](double x) { return x > 0.0 && x < 1.0 ? nullptr : "must be in (0, 1)"; }));
        f.push_back(uint_field("trainer", "seed", [](TrainConfig& c) -> std::uint64_t& { return c.seed; }));
        f.push_back({"trainer", "rectify", [](TrainConfig& c, const std::string& v) { c.rectify = parse_bool(v); },
                     [](const TrainConfig& c) { return fmt(c.rectify); }});
        f.push_back({"trainer", "merge",
                     [](TrainConfig& c, const std::string& v) {
                         if (v == "replace") c.merge = MergeMode::kReplace;
                         else if (v == "append") c.merge = MergeMode::kAppend;
                         else bad("merge must be replace or append, got '" + v + "'");
                     },
                     [](const TrainConfig& c) { return std::string(to_string(c.merge)); }});
        f.push_back(uint_field("trainer", "ppo_epochs", [](TrainConfig& c) -> std::size_t& { return c.ppo_epochs; }, 1));
        f.push_back({"trainer", "optimizer",
                     [](TrainConfig& c, const std::string& v) {
                         if (v == "sgd") c.optimizer = Optimizer::kSgd;
                         else if (v == "adam") c.optimizer = Optimizer::kAdam;
                         else bad("optimizer must be sgd or adam, got '" + v + "'");
                     },
                     [](const TrainConfig& c) { return std::string(to_string(c.optimizer)); }});
        f.push_back(real_field("trainer", "adam_beta1", [](TrainConfig& c) -> double& { return c.adam_beta1; },
                               [](double x) { return x >= 0.0 && x < 1.0 ? nullptr : "must be in [0, 1)"; }));
        f.push_back(real_field("trainer", "adam_beta2", [](TrainConfig& c) -> double& { return c.adam_beta2; },
                               [](double x) { return x >= 0.0 && x < 1.0 ? nullptr : "must be in [0, 1)"; }));
        f.push_back(real_field("trainer", "adam_epsilon", [](TrainConfig& c) -> double& { return c.adam_epsilon; },
                               [](double x) { return x > 0.0 ? nullptr : "must be > 0"; }));
        f.push_back(uint_field("trainer", "workers", [](TrainConfig& c) -> std::size_t& { return c.workers; }, 1));
        return f;
    }();
    return table;
}

const char* const kSections[] = {"env", "policy", "objective", "trainer"};

bool known_section(const std::string& s) {
    return std::find(std::begin(kSections), std::end(kSections), s) != std::end(kSections);
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const Field& f : fields())
        if (section == f.section && key == f.key) return &f;
    return nullptr;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string lower(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

std::string unknown_key_message(const std::string& section, const std::string& key) {
    std::string msg = "unknown key '" + key + "' in [" + section + "]";
    if (auto s = suggest_key(section, key)) msg += "; did you mean '" + *s + "'?";
    return msg;
}

}  // namespace

std::string ConfigDiagnostic::to_string() const {
    std::string s = source;
    if (line > 0) s += ":" + std::to_string(line);
    return s + ": " + message;
}

namespace {
std::string join_diagnostics(const std::vector<ConfigDiagnostic>& d) {
    std::string s;
    for (const auto& x : d) {
        if (!s.empty()) s += '\n';
        s += x.to_string();
    }
    return s;
}
}  // namespace

ConfigError::ConfigError(std::vector<ConfigDiagnostic> diagnostics)
    : std::runtime_error(join_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::optional<std::string> suggest_key(const std::string& section, const std::string& key) {
    std::optional<std::string> best;
    std::size_t best_d = std::string::npos;
    for (const Field& f : fields()) {
        if (known_section(section) && section != f.section) continue;
        const std::string cand = f.key;
        std::size_t d = levenshtein(key, cand);
        // A known key with something glued on ("rho_weight") is the likeliest intent.
        if (key.rfind(cand + "_", 0) == 0 || (key.size() > cand.size() && key.ends_with("_" + cand))) d = 0;
        if (d < best_d) {
            best_d = d;
            best = cand;
        }
    }
    if (best && best_d <= std::max<std::size_t>(2, key.size() / 3)) return best;
    return std::nullopt;
}

void set_config_value(TrainConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value) {
    if (!known_section(section)) bad("unknown section [" + section + "]");
    const Field* f = find_field(section, key);
    if (!f) bad(unknown_key_message(section, key));
    f->set(cfg, value);
}

TrainConfig parse_config(std::istream& in, const std::string& source, TrainConfig base) {
    std::vector<ConfigDiagnostic> diags;
    std::set<std::pair<std::string, std::string>> seen;
    std::string section;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty() || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                diags.push_back({source, lineno, "malformed section header"});
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!known_section(section)) diags.push_back({source, lineno, "unknown section [" + section + "]"});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            diags.push_back({source, lineno, "expected 'key = value'"});
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            diags.push_back({source, lineno, "key '" + key + "' outside of a section"});
            continue;
        }
        if (!known_section(section)) continue;  // already reported at the header
        if (!seen.insert({section, key}).second) {
            diags.push_back({source, lineno, "duplicate key '" + key + "' in [" + section + "]"});
            continue;
        }
        try {
            set_config_value(base, section, key, value);
        } catch (const std::invalid_argument& e) {
            diags.push_back({source, lineno, e.what()});
        }
    }
    if (diags.empty()) {
        try {
            base.validate();
        } catch (const std::invalid_argument& e) {
            diags.push_back({source, 0, e.what()});
        }
    }
    if (!diags.empty()) throw ConfigError(std::move(diags));
    return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError({{path.string(), 0, "cannot open config file"}});
    return parse_config(in, path.string(), std::move(base));
}

void apply_env_overrides(TrainConfig& cfg, const std::vector<std::pair<std::string, std::string>>& vars) {
    std::vector<ConfigDiagnostic> diags;
    for (const auto& [name, value] : vars) {
        const std::string prefix = "SCOPELAB_";
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string rest = lower(name.substr(prefix.size()));
        const auto us = rest.find('_');
        const std::string section = us == std::string::npos ? rest : rest.substr(0, us);
        const std::string key = us == std::string::npos ? std::string{} : rest.substr(us + 1);
        try {
            set_config_value(cfg, section, key, value);
        } catch (const std::invalid_argument& e) {
            diags.push_back({"environment " + name, 0, e.what()});
        }
    }
    if (diags.empty()) {
        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            diags.push_back({"environment", 0, e.what()});
        }
    }
    if (!diags.empty()) throw ConfigError(std::move(diags));
}

std::vector<std::pair<std::string, std::string>> scopelab_environment() {
    std::vector<std::pair<std::string, std::string>> out;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry = *e;
        if (entry.rfind("SCOPELAB_", 0) != 0) continue;
        const auto eq = entry.find('=');
        out.emplace_back(entry.substr(0, eq), eq == std::string::npos ? "" : entry.substr(eq + 1));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string format_config(const TrainConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const Field& f : fields()) {
        if (section != f.section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(cfg) << '\n';
    }
    return out.str();
}

}  // namespace scopelab
