#include "mfstop/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>

namespace mfstop {

namespace {

const char* type_name(ParamType t) {
    switch (t) {
        case ParamType::real: return "a number";
        case ParamType::integer: return "an integer";
        case ParamType::boolean: return "a boolean";
        case ParamType::text: return "a string";
        case ParamType::real_list: return "a list of numbers";
        case ParamType::integer_list: return "a list of integers";
    }
    return "?";
}

double parse_real(const std::string& key, std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError(key + ": expected a number, got '" + std::string(s) + "'");
    return v;
}

long long parse_integer(const std::string& key, std::string_view s) {
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError(key + ": expected an integer, got '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        out.push_back(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::size_t as_count(const Json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(key + " must be a nonnegative integer");
    return v.get<std::size_t>();
}

std::vector<double> as_real_list(const Json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError(key + " must be a list of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(key + " must be a list of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

}  // namespace

std::string flag_name(const std::string& key) {
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return "--" + f;
}

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

Json parse_param_text(const ParamSpec& spec, const std::string& text) {
    const std::string& key = spec.name;
    Json out;
    switch (spec.type) {
        case ParamType::real: out = parse_real(key, text); break;
        case ParamType::integer: out = parse_integer(key, text); break;
        case ParamType::boolean:
            if (text == "true" || text == "1") out = true;
            else if (text == "false" || text == "0") out = false;
            else throw ConfigError(key + ": expected true or false, got '" + text + "'");
            break;
        case ParamType::text: out = text; break;
        case ParamType::real_list:
            out = Json::array();
            for (auto part : split_commas(text)) out.push_back(parse_real(key, part));
            break;
        case ParamType::integer_list:
            out = Json::array();
            for (auto part : split_commas(text)) out.push_back(parse_integer(key, part));
            break;
    }
    check_param_value(spec, out);
    return out;
}

void check_param_value(const ParamSpec& spec, const Json& v) {
    bool ok = false;
    switch (spec.type) {
        case ParamType::real: ok = v.is_number(); break;
        case ParamType::integer: ok = v.is_number_integer(); break;
        case ParamType::boolean: ok = v.is_boolean(); break;
        case ParamType::text: ok = v.is_string(); break;
        case ParamType::real_list:
            ok = v.is_array() && !v.empty() &&
                 std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); });
            break;
        case ParamType::integer_list:
            ok = v.is_array() && !v.empty() &&
                 std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number_integer(); });
            break;
    }
    if (!ok) throw ConfigError(spec.name + " must be " + type_name(spec.type));
    if (!spec.choices.empty() &&
        std::find(spec.choices.begin(), spec.choices.end(), v.get<std::string>()) == spec.choices.end()) {
        std::string msg = spec.name + " must be one of:";
        for (const auto& c : spec.choices) msg += " " + c;
        throw ConfigError(msg);
    }
}

void reject_unknown_keys(const Json& obj, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : obj.items())
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

Json merge_params(const std::vector<ParamSpec>& specs, const Json& file_params,
                  const std::map<std::string, std::string>& flags) {
    std::vector<std::string> names;
    for (const auto& s : specs) names.push_back(s.name);
    if (!file_params.is_null()) reject_unknown_keys(file_params, names, "params");
    for (const auto& f : flags)
        if (std::find(names.begin(), names.end(), f.first) == names.end())
            throw ConfigError("unknown parameter '" + f.first + "'");

    Json out = Json::object();
    for (const auto& s : specs) {
        Json v = s.default_value;
        if (!file_params.is_null() && file_params.contains(s.name)) {
            v = file_params.at(s.name);
            check_param_value(s, v);
        }
        if (auto it = flags.find(s.name); it != flags.end()) v = parse_param_text(s, it->second);
        out[s.name] = v;
    }
    return out;
}

ModelConfig parse_model_config(const Json& j, ModelConfig m) {
    if (j.is_null()) return m;
    reject_unknown_keys(j, {"grid_points", "noise", "example"}, "model");
    if (j.contains("grid_points")) {
        m.grid_points = as_count(j.at("grid_points"), "grid_points");
        if (m.grid_points < 2) throw ConfigError("grid_points must be >= 2");
    }
    if (j.contains("noise")) {
        const Json& n = j.at("noise");
        reject_unknown_keys(n, {"type", "nodes", "samples", "seed"}, "model.noise");
        if (n.contains("type")) {
            if (!n.at("type").is_string()) throw ConfigError("noise.type must be a string");
            m.noise_type = n.at("type").get<std::string>();
        }
        if (m.noise_type != "gauss-legendre" && m.noise_type != "composite-gauss-legendre" &&
            m.noise_type != "monte-carlo")
            throw ConfigError("noise.type must be gauss-legendre, composite-gauss-legendre or monte-carlo");
        const bool mc = m.noise_type == "monte-carlo";
        if (n.contains("nodes")) {
            if (mc) throw ConfigError("noise.nodes does not apply to monte-carlo; use samples");
            m.nodes = as_count(n.at("nodes"), "noise.nodes");
        }
        if (n.contains("samples")) {
            if (!mc) throw ConfigError("noise.samples applies only to monte-carlo");
            m.samples = as_count(n.at("samples"), "noise.samples");
        }
        if (n.contains("seed")) {
            if (!mc) throw ConfigError("noise.seed applies only to monte-carlo");
            m.noise_seed = as_count(n.at("seed"), "noise.seed");
        }
        if (!mc && m.nodes < 1) throw ConfigError("noise.nodes must be positive");
        if (m.noise_type == "composite-gauss-legendre" && m.nodes % 4 != 0)
            throw ConfigError("noise.nodes must be a multiple of 4 for composite-gauss-legendre");
        if (mc && m.samples < 1) throw ConfigError("noise.samples must be positive");
    }
    if (j.contains("example")) {
        const Json& e = j.at("example");
        if (e.is_string()) {
            const auto s = e.get<std::string>();
            if (s == "rd") m.example = ExampleKind::rd;
            else if (s == "etf") m.example = ExampleKind::etf;
            else if (s == "custom-table")
                throw ConfigError("example custom-table needs {\"custom-table\": {transition, reward, mix}}");
            else throw ConfigError("example must be rd, etf or custom-table");
        } else {
            reject_unknown_keys(e, {"custom-table"}, "model.example");
            if (!e.contains("custom-table")) throw ConfigError("model.example object must hold custom-table");
            const Json& t = e.at("custom-table");
            reject_unknown_keys(t, {"transition", "reward", "mix"}, "model.example.custom-table");
            if (!t.contains("transition") || !t.contains("reward"))
                throw ConfigError("custom-table needs transition and reward tables");
            m.example = ExampleKind::custom_table;
            m.transition_table = as_real_list(t.at("transition"), "custom-table.transition");
            m.reward_table = as_real_list(t.at("reward"), "custom-table.reward");
            if (t.contains("mix")) {
                if (!t.at("mix").is_number()) throw ConfigError("custom-table.mix must be a number");
                m.mix = t.at("mix").get<double>();
            }
        }
    }
    return m;
}

Json to_json(const ModelConfig& m) {
    Json j = Json::object();
    j["grid_points"] = m.grid_points;
    Json n = Json::object();
    n["type"] = m.noise_type;
    if (m.noise_type == "monte-carlo") {
        n["samples"] = m.samples;
        if (m.noise_seed) n["seed"] = *m.noise_seed;
    } else {
        n["nodes"] = m.nodes;
    }
    j["noise"] = n;
    switch (m.example) {
        case ExampleKind::rd: j["example"] = "rd"; break;
        case ExampleKind::etf: j["example"] = "etf"; break;
        case ExampleKind::custom_table: {
            Json t = Json::object();
            t["transition"] = m.transition_table;
            t["reward"] = m.reward_table;
            t["mix"] = m.mix;
            j["example"] = Json{{"custom-table", t}};
            break;
        }
    }
    return j;
}

NoisePlan make_noise_plan(const ModelConfig& m, std::uint64_t run_seed) {
    if (m.noise_type == "gauss-legendre") return NoisePlan::gauss_legendre(m.nodes);
    if (m.noise_type == "composite-gauss-legendre")
        return NoisePlan::composite_gauss_legendre(m.nodes / 4, 4);
    return NoisePlan::monte_carlo(m.samples, m.noise_seed.value_or(run_seed));
}

ModelSpec build_model(const ModelConfig& m, std::uint64_t run_seed) {
    switch (m.example) {
        case ExampleKind::rd: return make_rd_model(m.grid_points, make_noise_plan(m, run_seed));
        case ExampleKind::custom_table:
            return make_custom_table_model(m.transition_table, m.reward_table, m.mix, m.grid_points,
                                           make_noise_plan(m, run_seed));
        case ExampleKind::etf: break;
    }
    throw ConfigError("the etf example has no unit-interval model; use etf-train or etf-simulate");
}

SeedChoice resolve_seed(std::optional<std::uint64_t> flag, const Json& file) {
    if (flag) return {*flag, "flag"};
    if (!file.is_null() && file.contains("seed")) return {as_count(file.at("seed"), "seed"), "config"};
    if (const char* env = std::getenv("MFSTOP_SEED"); env && *env) {
        const long long v = parse_integer("MFSTOP_SEED", env);
        if (v < 0) throw ConfigError("MFSTOP_SEED must be a nonnegative integer");
        return {static_cast<std::uint64_t>(v), "env"};
    }
    return {42, "default"};
}

}  // namespace mfstop
