#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scopelab/trainer.hpp"

namespace scopelab {

// Flat config files:
//
//     # comment
//     [trainer]
//     algorithm = scope
//     learning_rate = 0.1
//
// Sections are env, policy, objective and trainer. Every key is optional and
// defaults to TrainConfig's value; unknown keys are errors.

struct ConfigDiagnostic {
    std::string source;
    std::size_t line = 0;  // 0 when the problem is not tied to a line
    std::string message;
    std::string to_string() const;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<ConfigDiagnostic> diagnostics);
    const std::vector<ConfigDiagnostic>& diagnostics() const { return diagnostics_; }

private:
    std::vector<ConfigDiagnostic> diagnostics_;
};

/// Parses `in` on top of `base`. Collects every problem and throws ConfigError.
TrainConfig parse_config(std::istream& in, const std::string& source, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Applies `SCOPELAB_<SECTION>_<KEY>=value` overrides, e.g.
/// SCOPELAB_TRAINER_LEARNING_RATE=0.05. Names outside the schema are errors.
void apply_env_overrides(TrainConfig& cfg, const std::vector<std::pair<std::string, std::string>>& vars);
/// All SCOPELAB_* variables of the current process environment.
std::vector<std::pair<std::string, std::string>> scopelab_environment();

/// Sets one `section.key` from its textual value (used by CLI flags too).
void set_config_value(TrainConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value);

/// Normalized config text; parse_config(format_config(c)) reproduces c.
std::string format_config(const TrainConfig& cfg);

/// Closest known key of `section` to a misspelt one.
std::optional<std::string> suggest_key(const std::string& section, const std::string& key);

}  // namespace scopelab
