#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opfenv/eval.hpp"

namespace opfenv {

struct PathsConfig {
    std::string grid;
    std::string dataset;
    std::string out_dir = "out";
    std::string cache_dir;  // defaults to <out_dir>/cache
};

struct GenDataConfig {
    std::int64_t horizon = 3360;
    int timestep_minutes = 15;
    double noise = 0.1;
    double power_factor = 0.95;
    double test_fraction = 0.2;
    std::uint64_t seed = 1;
};

struct EvaluateConfig {
    int eval_samples = 500;
    bool eval_during_training = true;
};

/// Everything the CLI subcommands read, parsed from one config document with
/// per-section keys. Unknown keys are rejected at every level.
struct AppConfig {
    PathsConfig paths;
    ScenarioSpec scenario;
    DesignConfig design;
    DdpgConfig ddpg;
    OracleOptions oracle;
    GenDataConfig gen_data;
    EvaluateConfig evaluate;
    int scatter_samples = 1000;
    std::vector<ExperimentVariant> variants;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int jobs = 1;
    std::uint64_t seed = 0;
    bool deterministic = false;
};

/// Parse + validate a config document, applying dotted-key overrides
/// ("design.reward_mode=replacement") on top. Overrides are type-checked
/// against the schema. Throws ConfigError/ParseError.
AppConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
AppConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides = {});

/// The schema with every allowed key at its default value.
std::string default_config_text();

}  // namespace opfenv
