#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfstop/model.hpp"

namespace mfstop {

using Json = nlohmann::ordered_json;

/// Bad user input: unknown key, wrong type, malformed file. Maps to exit status 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ParamType { real, integer, boolean, text, real_list, integer_list };

struct ParamSpec {
    std::string name;  ///< JSON key; the flag is --name with '_' turned into '-'
    ParamType type;
    Json default_value;
    std::string help;
    std::vector<std::string> choices = {};  ///< allowed values for text params
};

std::string flag_name(const std::string& key);

Json load_json_file(const std::string& path);

/// Converts flag text to a typed value. Lists are comma separated.
Json parse_param_text(const ParamSpec& spec, const std::string& text);

/// Throws ConfigError unless `value` has the declared type (and choice set).
void check_param_value(const ParamSpec& spec, const Json& value);

/// Defaults, then file values, then flags. Keys are emitted in declaration order.
Json merge_params(const std::vector<ParamSpec>& specs, const Json& file_params,
                  const std::map<std::string, std::string>& flags);

/// Rejects keys of `obj` outside `allowed`; `where` names the section in the message.
void reject_unknown_keys(const Json& obj, const std::vector<std::string>& allowed,
                         const std::string& where);

enum class ExampleKind { rd, etf, custom_table };

struct ModelConfig {
    std::size_t grid_points = 2001;
    std::string noise_type = "composite-gauss-legendre";
    std::size_t nodes = 1024;     ///< quadrature nodes (composite: 4 per panel)
    std::size_t samples = 4096;   ///< Monte Carlo sample count
    std::optional<std::uint64_t> noise_seed;  ///< falls back to the run seed
    ExampleKind example = ExampleKind::rd;
    std::vector<double> transition_table;  ///< custom-table T1 on uniform nodes of [0,1]
    std::vector<double> reward_table;
    double mix = 0.5;
};

/// Parses {grid_points, noise{type, nodes|samples, seed}, example}. `example`
/// is "rd", "etf", or {"custom-table": {transition, reward, mix}}.
ModelConfig parse_model_config(const Json& j, ModelConfig base = {});

Json to_json(const ModelConfig& m);

NoisePlan make_noise_plan(const ModelConfig& m, std::uint64_t run_seed);

/// Model on the unit interval for rd or custom-table examples.
ModelSpec build_model(const ModelConfig& m, std::uint64_t run_seed);

struct SeedChoice {
    std::uint64_t seed;
    std::string source;  ///< "flag", "config", "env" or "default"
};

/// Flag, then config file, then the MFSTOP_SEED environment variable, then 42.
SeedChoice resolve_seed(std::optional<std::uint64_t> flag, const Json& file);

}  // namespace mfstop
