#include "opfenv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "opfenv/config.hpp"

namespace opfenv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool deterministic = false;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
    auto* config_opt = cmd->add_option("--config,-c", args.config_path, "config file (JSON)");
    if (needs_config) config_opt->required();
    cmd->add_option("--set", args.overrides, "override config keys, e.g. design.reward_mode=replacement");
    cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) {
        args.seed_given = true;
    });
    cmd->add_flag("--deterministic", args.deterministic,
                  "reproducible outputs (zeroes wall-clock fields)");
    cmd->add_option("--out", args.out, "output directory or file");
}

/// Paths resolve under $OPFENV_OUTPUT_ROOT unless absolute.
std::string resolve_out(const std::string& path) {
    const char* root = std::getenv("OPFENV_OUTPUT_ROOT");
    if (!root || *root == '\0' || fs::path(path).is_absolute()) return path;
    return (fs::path(root) / path).string();
}

AppConfig load(const CommonArgs& args) {
    AppConfig config = load_config(args.config_path, args.overrides);
    if (args.seed_given) config.seed = args.seed;
    config.deterministic = args.deterministic;
    if (!args.out.empty()) config.paths.out_dir = args.out;
    config.paths.out_dir = resolve_out(config.paths.out_dir);
    if (config.paths.cache_dir.empty()) {
        config.paths.cache_dir = (fs::path(config.paths.out_dir) / "cache").string();
    } else {
        config.paths.cache_dir = resolve_out(config.paths.cache_dir);
    }
    return config;
}

GridModel load_grid_checked(const AppConfig& config) {
    if (config.paths.grid.empty()) throw ConfigError("paths.grid is required");
    return load_grid(config.paths.grid);
}

Dataset load_dataset_checked(const AppConfig& config) {
    if (config.paths.dataset.empty()) throw ConfigError("paths.dataset is required");
    return Dataset::load(config.paths.dataset);
}

std::string scenario_tag(const ScenarioSpec& spec) {
    return spec.kind == ObjectiveKind::voltage_control ? "vc" : "ed";
}

int cmd_gen_data(const CommonArgs& args) {
    const AppConfig config = load(args);
    const GridModel grid = load_grid_checked(config);

    SyntheticProfileConfig profile = default_profile_config(
        grid, config.scenario, config.gen_data.horizon,
        args.seed_given ? config.seed : config.gen_data.seed);
    profile.timestep_minutes = config.gen_data.timestep_minutes;
    profile.noise = config.gen_data.noise;
    profile.power_factor = config.gen_data.power_factor;

    Dataset dataset = split_dataset(generate_profiles(profile), config.gen_data.test_fraction);

    std::string out = config.paths.dataset;
    if (out.empty()) {
        out = (fs::path(config.paths.out_dir) /
               (scenario_tag(config.scenario) + std::string("_profiles.csv")))
                  .string();
    }
    fs::create_directories(fs::path(out).parent_path().empty() ? fs::path(".")
                                                               : fs::path(out).parent_path());
    dataset.save(out);
    std::cout << "wrote " << dataset.n_rows() << " rows (" << dataset.n_train() << " train, "
              << dataset.n_test() << " test) to " << out << "\n";
    return 0;
}

int cmd_powerflow(const std::string& grid_path, const std::string& injections_path) {
    const GridModel grid = load_grid(grid_path);
    InjectionSet injections = InjectionSet::zeros(grid);

    if (!injections_path.empty()) {
        std::ifstream in(injections_path);
        if (!in) throw IoError("cannot open injections file: " + injections_path);
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw ParseError(std::string("injections document: ") + e.what());
        }
        const GridIndex index(grid);
        for (const auto& entry : doc.at("injections")) {
            const int bus = entry.at("bus").get<int>();
            injections.p_mw[index.of_bus(bus)] += entry.value("p_mw", 0.0);
            injections.q_mvar[index.of_bus(bus)] += entry.value("q_mvar", 0.0);
        }
    } else {
        injections = InjectionSet::from_units(grid);
    }

    const PowerFlowResult result = solve_power_flow(grid, injections);
    std::cout << (result.converged ? "converged" : "NOT CONVERGED") << " in " << result.iterations
              << " iterations, max mismatch " << result.max_mismatch_pu << " pu\n";
    for (std::size_t b = 0; b < grid.buses.size(); ++b) {
        std::printf("bus %4d  %8.5f pu  %9.5f rad\n", grid.buses[b].id,
                    result.v_mag_pu[static_cast<int>(b)], result.v_ang_rad[static_cast<int>(b)]);
    }
    if (result.converged) {
        std::printf("losses %.6f MW, external exchange %.6f MW / %.6f Mvar\n",
                    result.total_losses_mw, result.ext_p_mw, result.ext_q_mvar);
    }
    return result.converged ? 0 : 1;
}

int cmd_oracle(const CommonArgs& args, const std::string& rows_arg) {
    const AppConfig config = load(args);
    const GridModel grid = load_grid_checked(config);
    Dataset dataset = load_dataset_checked(config);

    std::vector<std::int64_t> rows;
    if (rows_arg.empty()) {
        rows = evaluation_rows(dataset, config.evaluate.eval_samples);
    } else {
        const auto colon = rows_arg.find(':');
        if (colon == std::string::npos) {
            rows.push_back(std::stoll(rows_arg));
        } else {
            const std::int64_t lo = std::stoll(rows_arg.substr(0, colon));
            const std::int64_t hi = std::stoll(rows_arg.substr(colon + 1));
            for (std::int64_t r = lo; r < hi; ++r) rows.push_back(r);
        }
    }

    const OpfProblem problem = make_problem(grid, config.scenario);
    Environment probe = make_environment(grid, config.scenario, dataset, config.design);
    OracleCache cache(config.paths.cache_dir, scenario_tag(config.scenario), grid_hash(grid));
    cache.ensure(problem, dataset, probe.state_columns(), rows, config.oracle);

    int valid = 0;
    for (std::int64_t row : rows) {
        if (cache.find(row)->valid) ++valid;
    }
    std::cout << "oracle cache " << cache.file_path() << ": " << rows.size() << " states, "
              << valid << " valid\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    const AppConfig config = load(args);
    const GridModel grid = load_grid_checked(config);
    Dataset dataset = load_dataset_checked(config);
    fs::create_directories(config.paths.out_dir);

    Environment env = make_environment(grid, config.scenario, dataset, config.design);
    RunResult record;
    record.variant = "train";
    record.seed = config.seed;
    record.steps = config.ddpg.total_steps;
    if (config.design.reward_mode == RewardMode::replacement && std::isnan(env.offset_k())) {
        RngStream calib_rng(config.seed, 0xca11b8ULL);
        const CalibrationResult calibration =
            calibrate_offset(env, config.design.offset_mode, calib_rng);
        env.set_offset_k(calibration.k);
        record.offset_k = calibration.k;
        std::cout << "calibrated replacement offset k = " << calibration.k << "\n";
    }

    DdpgConfig ddpg = config.ddpg;
    ddpg.seed = config.seed;

    EvalCallback eval_cb;
    Environment eval_env = env;
    OracleCache* cache_ptr = nullptr;
    OracleCache cache(config.paths.cache_dir, scenario_tag(config.scenario), grid_hash(grid));
    std::vector<std::int64_t> rows;
    if (config.evaluate.eval_during_training) {
        rows = evaluation_rows(dataset, config.evaluate.eval_samples);
        const OpfProblem problem = make_problem(grid, config.scenario);
        cache.ensure(problem, dataset, env.state_columns(), rows, config.oracle);
        cache_ptr = &cache;
        eval_cb = [&](const Policy& policy, int) {
            const EvaluationReport report =
                evaluate_policy(policy, eval_env, rows, cache, config.seed);
            EvalSnapshot snapshot;
            snapshot.invalid_share_percent = report.invalid_share_percent;
            if (report.mape_percent) snapshot.mape_percent = *report.mape_percent;
            return snapshot;
        };
    }

    TrainResult trained = ddpg_train(env, ddpg, eval_cb);
    record.log = trained.log;
    if (cache_ptr) {
        record.report = evaluate_policy(trained.policy, eval_env, rows, *cache_ptr, config.seed);
    }
    if (config.deterministic) {
        for (auto& cp : record.log.checkpoints) cp.wall_clock_s = 0.0;
        record.wall_clock_s = 0.0;
    } else if (!record.log.checkpoints.empty()) {
        record.wall_clock_s = record.log.checkpoints.back().wall_clock_s;
    }

    const std::string policy_path = (fs::path(config.paths.out_dir) / "policy.ckpt").string();
    save_policy(trained.policy, policy_path);
    std::ofstream out((fs::path(config.paths.out_dir) / "train.result").string());
    out << run_result_to_json(record);
    std::cout << "policy written to " << policy_path << "\n";
    if (record.report.mape_percent) {
        std::cout << "final MAPE " << *record.report.mape_percent << "%, invalid share "
                  << record.report.invalid_share_percent << "%\n";
    }
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& policy_path) {
    const AppConfig config = load(args);
    const GridModel grid = load_grid_checked(config);
    Dataset dataset = load_dataset_checked(config);
    fs::create_directories(config.paths.out_dir);

    const Policy policy = load_policy(policy_path);
    Environment env = make_environment(grid, config.scenario, dataset, config.design);
    if (config.design.reward_mode == RewardMode::replacement && std::isnan(env.offset_k())) {
        env.set_offset_k(0.0);  // reward values are not part of the metrics
    }
    const std::vector<std::int64_t> rows = evaluation_rows(dataset, config.evaluate.eval_samples);
    const OpfProblem problem = make_problem(grid, config.scenario);
    OracleCache cache(config.paths.cache_dir, scenario_tag(config.scenario), grid_hash(grid));
    cache.ensure(problem, dataset, env.state_columns(), rows, config.oracle);

    RunResult record;
    record.variant = "evaluate";
    record.seed = config.seed;
    record.report = evaluate_policy(policy, env, rows, cache, config.seed);

    std::ofstream out((fs::path(config.paths.out_dir) / "evaluation.result").string());
    out << run_result_to_json(record);
    std::cout << "n=" << record.report.n << " invalid_share=" << record.report.invalid_share_percent
              << "%";
    if (record.report.mape_percent) std::cout << " mape=" << *record.report.mape_percent << "%";
    std::cout << "\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args, int jobs_override) {
    const AppConfig config = load(args);
    ExperimentPlan plan;
    plan.grid = load_grid_checked(config);
    plan.scenario = config.scenario;
    plan.dataset = load_dataset_checked(config);
    plan.variants = config.variants;
    if (plan.variants.empty()) {
        plan.variants.push_back({"baseline", config.design});
    }
    plan.seeds = config.seeds;
    plan.ddpg = config.ddpg;
    plan.eval_samples = config.evaluate.eval_samples;
    plan.oracle = config.oracle;
    plan.out_dir = config.paths.out_dir;
    plan.cache_dir = config.paths.cache_dir;
    plan.deterministic = config.deterministic;
    plan.jobs = jobs_override > 0 ? jobs_override : config.jobs;

    const std::vector<RunResult> results = run_experiment(plan);
    const std::string table = (fs::path(plan.out_dir) / "results.csv").string();
    export_results(results, table);

    int diverged = 0;
    for (const auto& result : results) {
        if (result.diverged) ++diverged;
    }
    std::cout << results.size() << " runs -> " << table;
    if (diverged) std::cout << " (" << diverged << " diverged)";
    std::cout << "\n";
    return 0;
}

int cmd_scatter(const CommonArgs& args, int samples_override) {
    const AppConfig config = load(args);
    const GridModel grid = load_grid_checked(config);
    Dataset dataset = load_dataset_checked(config);
    fs::create_directories(config.paths.out_dir);

    Environment env = make_environment(grid, config.scenario, dataset, config.design);
    RngStream rng(config.seed, 0x5ca77e8ULL);
    const int n = samples_override > 0 ? samples_override : config.scatter_samples;
    const ScatterResult scatter = scatter_diagnostic(env, n, rng);

    const std::string path =
        (fs::path(config.paths.out_dir) / ("scatter_" + scenario_tag(config.scenario) + ".csv"))
            .string();
    std::ofstream out(path);
    out << "normalized_objective,total_violation\n";
    char buf[64];
    for (const auto& [x, y] : scatter.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", x, y);
        out << buf;
    }
    std::cout << scatter.points.size() << " samples";
    if (scatter.skipped_non_converged) {
        std::cout << " (" << scatter.skipped_non_converged << " non-converged skipped)";
    }
    if (scatter.pearson_r) {
        std::cout << ", pearson r = " << *scatter.pearson_r;
    } else {
        std::cout << ", pearson r undefined";
    }
    std::cout << " -> " << path << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"constrained optimal power flow as reinforcement-learning environments"};
    app.require_subcommand(1);

    CommonArgs gen_args, pf_args, oracle_args, train_args, eval_args, sweep_args, scatter_args;
    std::string pf_grid, pf_injections, oracle_rows, eval_policy;
    int sweep_jobs = 0, scatter_samples = 0;

    auto* gen = app.add_subcommand("gen-data", "generate synthetic profiles for a grid");
    add_common(gen, gen_args);

    auto* pf = app.add_subcommand("powerflow", "solve one power flow and print the state");
    pf->add_option("--grid", pf_grid, "grid file")->required();
    pf->add_option("--injections", pf_injections, "injections file (JSON); defaults to unit records");
    add_common(pf, pf_args, false);

    auto* oracle = app.add_subcommand("oracle", "fill the reference-optimum cache");
    add_common(oracle, oracle_args);
    oracle->add_option("--rows", oracle_rows, "dataset rows as 'lo:hi' or a single id");

    auto* train = app.add_subcommand("train", "train one DDPG agent");
    add_common(train, train_args);

    auto* evaluate = app.add_subcommand("evaluate", "score a policy checkpoint on the test split");
    add_common(evaluate, eval_args);
    evaluate->add_option("--policy", eval_policy, "policy checkpoint")->required();

    auto* sweep = app.add_subcommand("sweep", "run an experiment plan of variants x seeds");
    add_common(sweep, sweep_args);
    sweep->add_option("--jobs", sweep_jobs, "parallel runs");

    auto* scatter = app.add_subcommand("scatter", "objective-violation scatter diagnostic");
    add_common(scatter, scatter_args);
    scatter->add_option("--samples", scatter_samples, "random state-action pairs");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (pf->parsed()) return cmd_powerflow(pf_grid, pf_injections);
        if (oracle->parsed()) return cmd_oracle(oracle_args, oracle_rows);
        if (train->parsed()) return cmd_train(train_args);
        if (evaluate->parsed()) return cmd_evaluate(eval_args, eval_policy);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_jobs);
        if (scatter->parsed()) return cmd_scatter(scatter_args, scatter_samples);
    } catch (const DivergenceDetected& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace opfenv::cli
