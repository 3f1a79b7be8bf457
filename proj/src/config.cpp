#include "opfenv/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace opfenv {

using nlohmann::json;

namespace {

json schema_defaults() {
    json schema;
    schema["paths"] = {{"grid", ""}, {"dataset", ""}, {"out_dir", "out"}, {"cache_dir", ""}};
    schema["scenario"] = {{"kind", "voltage_control"},
                          {"actuators", json::array()},
                          {"penalty_factor", nullptr},
                          {"penalty_factors", nullptr},
                          {"validity_tolerance", 1e-6},
                          {"loss_price", 50.0},
                          {"reactive_price_range", {0.0, 1.0}},
                          {"active_price_range", {20.0, 100.0}},
                          {"exchange_mode", "active_power"}};
    schema["design"] = {{"data_source", "time_series"},
                        {"obs_mode", "markov"},
                        {"init_action_mode", "fixed"},
                        {"episode_mode", "one_step"},
                        {"n_steps", 5},
                        {"reward_mode", "summation"},
                        {"penalty_factors", nullptr},
                        {"offset_mode", "min"},
                        {"offset_k", nullptr},
                        {"normal_sigma_rel", 0.3}};
    schema["ddpg"] = {{"memory_size", 1000000},
                      {"batch_size", 1024},
                      {"actor_lr", 1e-4},
                      {"critic_lr", 5e-4},
                      {"hidden", {256, 256, 256}},
                      {"noise_std", 0.1},
                      {"gamma", 0.0},
                      {"tau", 0.005},
                      {"warmup_steps", 1000},
                      {"total_steps", 50000},
                      {"eval_interval", 1000}};
    schema["oracle"] = {{"starts", 10},
                        {"max_evals_per_round", 1500},
                        {"initial_step", 0.25},
                        {"min_step", 1e-4}};
    schema["gen_data"] = {{"horizon", 3360},
                          {"timestep_minutes", 15},
                          {"noise", 0.1},
                          {"power_factor", 0.95},
                          {"test_fraction", 0.2},
                          {"seed", 1}};
    schema["evaluate"] = {{"eval_samples", 500}, {"eval_during_training", true}};
    schema["scatter"] = {{"n_samples", 1000}};
    schema["sweep"] = {{"variants", json::array()}, {"seeds", {0, 1, 2}}, {"jobs", 1}};
    return schema;
}

bool types_compatible(const json& schema_value, const json& user_value) {
    if (schema_value.is_null() || user_value.is_null()) return true;
    if (schema_value.is_number() && user_value.is_number()) return true;
    return schema_value.type() == user_value.type();
}

void check_against_schema(const json& schema, const json& user, const std::string& prefix) {
    if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) {
            throw ConfigError("unknown config key '" + path + "'");
        }
        const json& expected = schema.at(it.key());
        if (expected.is_object()) {
            check_against_schema(expected, it.value(), path);
        } else if (!types_compatible(expected, it.value())) {
            throw ConfigError("config key '" + path + "' has the wrong type");
        }
    }
}

json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text);  // bare words are strings
    }
}

void apply_override(json& doc, const json& schema, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like section.key=value: " + assignment);
    }
    const std::string dotted = assignment.substr(0, eq);
    const json value = parse_override_value(assignment.substr(eq + 1));

    std::vector<std::string> parts;
    std::istringstream stream(dotted);
    std::string part;
    while (std::getline(stream, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("empty override key");

    const json* schema_node = &schema;
    json* node = &doc;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!schema_node->contains(parts[i]) || !schema_node->at(parts[i]).is_object()) {
            throw ConfigError("unknown config key '" + dotted + "'");
        }
        schema_node = &schema_node->at(parts[i]);
        node = &(*node)[parts[i]];
    }
    const std::string& leaf = parts.back();
    if (!schema_node->contains(leaf)) {
        throw ConfigError("unknown config key '" + dotted + "'");
    }
    if (!types_compatible(schema_node->at(leaf), value)) {
        throw ConfigError("override '" + dotted + "' has the wrong type");
    }
    (*node)[leaf] = value;
}

PenaltyFactors penalties_from_json(const json& j, const PenaltyFactors& fallback) {
    if (j.is_null()) return fallback;
    if (j.is_number()) return PenaltyFactors::uniform(j.get<double>());
    PenaltyFactors alphas = fallback;
    static const std::vector<std::pair<std::string, ConstraintKind>> kinds = {
        {"voltage_band", ConstraintKind::voltage_band},
        {"line_loading", ConstraintKind::line_loading},
        {"external_exchange", ConstraintKind::external_exchange},
        {"actuator_capability", ConstraintKind::actuator_capability},
        {"non_convergence", ConstraintKind::non_convergence},
    };
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const auto& [name, kind] : kinds) {
            if (it.key() == name) {
                alphas.of(kind) = it.value().get<double>();
                known = true;
            }
        }
        if (!known) throw ConfigError("unknown penalty factor '" + it.key() + "'");
    }
    return alphas;
}

template <typename T>
T get_or(const json& section, const char* key, T fallback) {
    if (!section.contains(key)) return fallback;
    return section.at(key).get<T>();
}

ScenarioSpec scenario_from_json(const json& section) {
    const std::string kind = get_or<std::string>(section, "kind", "voltage_control");
    ScenarioSpec spec;
    if (kind == "voltage_control") {
        spec = ScenarioSpec::voltage_control_defaults();
    } else if (kind == "eco_dispatch") {
        spec = ScenarioSpec::eco_dispatch_defaults();
    } else {
        throw ConfigError("scenario.kind must be voltage_control or eco_dispatch");
    }
    if (section.contains("actuators")) {
        spec.actuators = section.at("actuators").get<std::vector<int>>();
    }
    if (section.contains("penalty_factor") && !section.at("penalty_factor").is_null()) {
        spec.penalties = PenaltyFactors::uniform(section.at("penalty_factor").get<double>());
    }
    if (section.contains("penalty_factors")) {
        spec.penalties = penalties_from_json(section.at("penalty_factors"), spec.penalties);
    }
    spec.validity_tolerance = get_or(section, "validity_tolerance", spec.validity_tolerance);
    spec.loss_price = get_or(section, "loss_price", spec.loss_price);
    if (section.contains("reactive_price_range")) {
        const auto range = section.at("reactive_price_range").get<std::vector<double>>();
        if (range.size() != 2) throw ConfigError("reactive_price_range must be [lo, hi]");
        spec.reactive_price_range = {range[0], range[1]};
    }
    if (section.contains("active_price_range")) {
        const auto range = section.at("active_price_range").get<std::vector<double>>();
        if (range.size() != 2) throw ConfigError("active_price_range must be [lo, hi]");
        spec.active_price_range = {range[0], range[1]};
    }
    const std::string mode = get_or<std::string>(section, "exchange_mode", "active_power");
    if (mode == "active_power") {
        spec.exchange_mode = ExchangeBoundMode::active_power;
    } else if (mode == "reactive_power") {
        spec.exchange_mode = ExchangeBoundMode::reactive_power;
    } else {
        throw ConfigError("scenario.exchange_mode must be active_power or reactive_power");
    }
    return spec;
}

template <typename Enum>
Enum enum_from(const json& section, const char* key, Enum fallback,
               const std::vector<std::pair<std::string, Enum>>& names) {
    if (!section.contains(key)) return fallback;
    const std::string value = section.at(key).get<std::string>();
    for (const auto& [name, e] : names) {
        if (name == value) return e;
    }
    throw ConfigError(std::string("invalid value '") + value + "' for " + key);
}

DesignConfig design_from_json(const json& section) {
    DesignConfig design;
    design.data_source = enum_from(section, "data_source", design.data_source,
                                   {{"time_series", DataSource::time_series},
                                    {"uniform", DataSource::uniform},
                                    {"normal", DataSource::normal}});
    design.obs_mode = enum_from(section, "obs_mode", design.obs_mode,
                                {{"markov", ObsMode::markov}, {"redundant", ObsMode::redundant}});
    design.init_action_mode =
        enum_from(section, "init_action_mode", design.init_action_mode,
                  {{"fixed", InitActionMode::fixed}, {"random", InitActionMode::random}});
    design.episode_mode =
        enum_from(section, "episode_mode", design.episode_mode,
                  {{"one_step", EpisodeMode::one_step}, {"n_step", EpisodeMode::n_step}});
    design.n_steps = get_or(section, "n_steps", design.n_steps);
    design.reward_mode =
        enum_from(section, "reward_mode", design.reward_mode,
                  {{"summation", RewardMode::summation}, {"replacement", RewardMode::replacement}});
    if (section.contains("penalty_factors") && !section.at("penalty_factors").is_null()) {
        design.penalty_factors =
            penalties_from_json(section.at("penalty_factors"), PenaltyFactors{});
    }
    design.offset_mode = enum_from(section, "offset_mode", design.offset_mode,
                                   {{"min", OffsetMode::min}, {"mean", OffsetMode::mean}});
    if (section.contains("offset_k") && !section.at("offset_k").is_null()) {
        design.offset_k = section.at("offset_k").get<double>();
    }
    design.normal_sigma_rel = get_or(section, "normal_sigma_rel", design.normal_sigma_rel);
    return design;
}

DdpgConfig ddpg_from_json(const json& section) {
    DdpgConfig config;
    config.memory_size = get_or<std::size_t>(section, "memory_size", config.memory_size);
    config.batch_size = get_or(section, "batch_size", config.batch_size);
    config.actor_lr = get_or(section, "actor_lr", config.actor_lr);
    config.critic_lr = get_or(section, "critic_lr", config.critic_lr);
    if (section.contains("hidden")) {
        config.hidden = section.at("hidden").get<std::vector<int>>();
    }
    config.noise_std = get_or(section, "noise_std", config.noise_std);
    config.gamma = get_or(section, "gamma", config.gamma);
    config.tau = get_or(section, "tau", config.tau);
    config.warmup_steps = get_or(section, "warmup_steps", config.warmup_steps);
    config.total_steps = get_or(section, "total_steps", config.total_steps);
    config.eval_interval = get_or(section, "eval_interval", config.eval_interval);
    return config;
}

}  // namespace

std::string default_config_text() { return schema_defaults().dump(2) + "\n"; }

AppConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config document: ") + e.what());
    }
    const json schema = schema_defaults();
    check_against_schema(schema, doc, "");
    for (const auto& assignment : overrides) apply_override(doc, schema, assignment);

    const json empty = json::object();
    auto section = [&](const char* key) -> const json& {
        return doc.contains(key) ? doc.at(key) : empty;
    };

    AppConfig config;
    {
        const json& paths = section("paths");
        config.paths.grid = get_or<std::string>(paths, "grid", "");
        config.paths.dataset = get_or<std::string>(paths, "dataset", "");
        config.paths.out_dir = get_or<std::string>(paths, "out_dir", "out");
        config.paths.cache_dir = get_or<std::string>(paths, "cache_dir", "");
    }
    config.scenario = scenario_from_json(section("scenario"));
    config.design = design_from_json(section("design"));
    config.design.validate();
    config.ddpg = ddpg_from_json(section("ddpg"));
    config.ddpg.validate();
    {
        const json& oracle = section("oracle");
        config.oracle.starts = get_or(oracle, "starts", config.oracle.starts);
        config.oracle.max_evals_per_round =
            get_or(oracle, "max_evals_per_round", config.oracle.max_evals_per_round);
        config.oracle.initial_step = get_or(oracle, "initial_step", config.oracle.initial_step);
        config.oracle.min_step = get_or(oracle, "min_step", config.oracle.min_step);
    }
    {
        const json& gen = section("gen_data");
        config.gen_data.horizon = get_or(gen, "horizon", config.gen_data.horizon);
        config.gen_data.timestep_minutes =
            get_or(gen, "timestep_minutes", config.gen_data.timestep_minutes);
        config.gen_data.noise = get_or(gen, "noise", config.gen_data.noise);
        config.gen_data.power_factor = get_or(gen, "power_factor", config.gen_data.power_factor);
        config.gen_data.test_fraction = get_or(gen, "test_fraction", config.gen_data.test_fraction);
        config.gen_data.seed = get_or<std::uint64_t>(gen, "seed", config.gen_data.seed);
    }
    {
        const json& ev = section("evaluate");
        config.evaluate.eval_samples = get_or(ev, "eval_samples", config.evaluate.eval_samples);
        config.evaluate.eval_during_training =
            get_or(ev, "eval_during_training", config.evaluate.eval_during_training);
    }
    config.scatter_samples = get_or(section("scatter"), "n_samples", config.scatter_samples);
    {
        const json& sweep = section("sweep");
        if (sweep.contains("seeds")) {
            config.seeds = sweep.at("seeds").get<std::vector<std::uint64_t>>();
        }
        config.jobs = get_or(sweep, "jobs", config.jobs);
        if (sweep.contains("variants")) {
            for (const auto& v : sweep.at("variants")) {
                if (!v.contains("id")) throw ConfigError("sweep variant needs an 'id'");
                for (auto it = v.begin(); it != v.end(); ++it) {
                    if (it.key() != "id" && it.key() != "design") {
                        throw ConfigError("unknown variant key '" + it.key() + "'");
                    }
                }
                ExperimentVariant variant;
                variant.id = v.at("id").get<std::string>();
                json merged = doc.contains("design") ? doc.at("design") : json::object();
                if (v.contains("design")) {
                    check_against_schema(schema.at("design"), v.at("design"),
                                         "sweep.variants.design");
                    merged.update(v.at("design"));
                }
                variant.design = design_from_json(merged);
                variant.design.validate();
                config.variants.push_back(variant);
            }
        }
    }
    return config;
}

AppConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), overrides);
}

}  // namespace opfenv
