#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "opfenv/eval.hpp"

using namespace opfenv;
namespace fs = std::filesystem;

namespace {

SampleRecord record(std::int64_t id, double j, double j_star, bool agent_valid,
                    bool oracle_valid = true) {
    SampleRecord r;
    r.state_id = id;
    r.agent_objective = j;
    r.oracle_objective = j_star;
    r.agent_valid = agent_valid;
    r.oracle_valid = oracle_valid;
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("MAPE: exact agreement, direct substitution and invalid-sample exclusion") {
    CHECK(*compute_mape({record(0, 100.0, 100.0, true), record(1, 7.0, 7.0, true)}) ==
          doctest::Approx(0.0));
    CHECK(*compute_mape({record(0, 110.0, 100.0, true)}) == doctest::Approx(10.0));
    CHECK(*compute_mape({record(0, 110.0, 100.0, true), record(1, 999.0, 100.0, false)}) ==
          doctest::Approx(10.0));
    CHECK_FALSE(compute_mape({record(0, 110.0, 100.0, false)}).has_value());
    CHECK_THROWS_AS(compute_mape({record(0, 1.0, 0.0, true)}), DegenerateOracle);
}

TEST_CASE("MAPE exclusion law: invalid samples cannot move the metric") {
    RngStream rng(31);
    std::vector<SampleRecord> samples;
    for (int i = 0; i < 20; ++i) {
        samples.push_back(record(i, rng.uniform(50.0, 150.0), 100.0, i % 3 != 0));
    }
    const double before = *compute_mape(samples);
    for (auto& sample : samples) {
        if (!sample.agent_valid) sample.agent_objective = rng.uniform(-1e6, 1e6);
    }
    CHECK(*compute_mape(samples) == before);
}

TEST_CASE("invalid share arithmetic and bounds") {
    CHECK(compute_invalid_share(100, 100) == doctest::Approx(0.0));
    CHECK(compute_invalid_share(80, 100) == doctest::Approx(20.0));
    CHECK(compute_invalid_share(0, 100) == doctest::Approx(100.0));
    CHECK_THROWS(compute_invalid_share(5, 4));
    CHECK_THROWS(compute_invalid_share(0, 0));
}

TEST_CASE("oracle self-comparison scores zero MAPE") {
    std::vector<SampleRecord> samples;
    for (int i = 0; i < 10; ++i) {
        const bool oracle_valid = i % 4 != 0;
        samples.push_back(record(i, 100.0 + i, 100.0 + i, oracle_valid, oracle_valid));
    }
    CHECK(*compute_mape(samples) == doctest::Approx(0.0));
}

TEST_CASE("grid hash is stable and sensitive") {
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    CHECK(grid_hash(grid) == grid_hash(grid));
    GridModel changed = grid;
    changed.branches[0].x_pu += 1e-9;
    CHECK(grid_hash(grid) != grid_hash(changed));
}

TEST_CASE("evaluation rows: deterministic, test-split-only, shared across variants") {
    const Dataset dataset = testutil::tiny_dataset(1, 1, true, 100);
    const auto rows_a = evaluation_rows(dataset, 8);
    const auto rows_b = evaluation_rows(dataset, 8);
    CHECK(rows_a == rows_b);
    CHECK(rows_a.size() == 8);
    for (std::size_t i = 0; i < rows_a.size(); ++i) {
        CHECK(dataset.is_test_row(rows_a[i]));
        if (i) CHECK(rows_a[i] > rows_a[i - 1]);
    }
    CHECK(evaluation_rows(dataset, 1000).size() == static_cast<std::size_t>(dataset.n_test()));
}

TEST_CASE("oracle cache round-trips through disk and fills missing entries") {
    const fs::path dir = fresh_dir("opfenv_cache_test");
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    const OpfProblem problem = make_problem(grid, ScenarioSpec::voltage_control_defaults());
    const Dataset dataset = testutil::tiny_dataset(1, 1, true, 20);
    Environment env = make_voltage_control(grid, ScenarioSpec::voltage_control_defaults(),
                                           dataset, DesignConfig{});

    OracleOptions cheap;
    cheap.starts = 3;
    cheap.max_evals_per_round = 200;

    OracleCache cache(dir.string(), "vc", grid_hash(grid));
    CHECK_FALSE(cache.find(16).has_value());
    cache.ensure(problem, dataset, env.state_columns(), {16, 17}, cheap);
    REQUIRE(cache.find(16).has_value());

    OracleCache reloaded(dir.string(), "vc", grid_hash(grid));
    REQUIRE(reloaded.find(16).has_value());
    CHECK(reloaded.find(16)->objective_value == cache.find(16)->objective_value);
    CHECK(reloaded.find(16)->valid == cache.find(16)->valid);
    fs::remove_all(dir);
}

TEST_CASE("evaluate_policy is deterministic and fails loudly on a cold cache") {
    const fs::path dir = fresh_dir("opfenv_eval_test");
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    const Dataset dataset = testutil::tiny_dataset(1, 1, true, 40);
    Environment env = make_voltage_control(grid, ScenarioSpec::voltage_control_defaults(),
                                           dataset, DesignConfig{});
    const auto rows = evaluation_rows(dataset, 4);

    RngStream rng(41);
    Policy policy;
    policy.actor = Mlp({env.observation_layout().size(), 8, env.box().dims()},
                       OutputActivation::tanh, rng);
    policy.box = env.box();

    OracleCache empty_cache(dir.string(), "vc", grid_hash(grid));
    CHECK_THROWS_AS(evaluate_policy(policy, env, rows, empty_cache), OracleMissing);

    OracleOptions cheap;
    cheap.starts = 3;
    cheap.max_evals_per_round = 200;
    empty_cache.ensure(make_problem(grid, ScenarioSpec::voltage_control_defaults()), dataset,
                       env.state_columns(), rows, cheap);

    const EvaluationReport a = evaluate_policy(policy, env, rows, empty_cache, 7);
    const EvaluationReport b = evaluate_policy(policy, env, rows, empty_cache, 7);
    CHECK(a.n == static_cast<int>(rows.size()));
    CHECK(a.n_valid == b.n_valid);
    CHECK(a.invalid_share_percent == b.invalid_share_percent);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].agent_objective == b.samples[i].agent_objective);
        CHECK(dataset.is_test_row(a.samples[i].state_id));  // sampling isolation
    }
    fs::remove_all(dir);
}

TEST_CASE("run result JSON round trip") {
    RunResult result;
    result.variant = "baseline";
    result.seed = 3;
    result.steps = 1000;
    result.offset_k = 42.5;
    result.report.n = 2;
    result.report.n_valid = 1;
    result.report.invalid_share_percent = 50.0;
    result.report.mape_percent = 12.5;
    result.report.samples = {record(80, 110.0, 100.0, true), record(81, 90.0, 95.0, false)};
    result.log.checkpoints.push_back({500, 20.0, 30.0, -5.0, 0.0});

    const RunResult loaded = run_result_from_json(run_result_to_json(result));
    CHECK(loaded.variant == result.variant);
    CHECK(loaded.seed == result.seed);
    CHECK(loaded.offset_k == result.offset_k);
    CHECK(*loaded.report.mape_percent == *result.report.mape_percent);
    CHECK(loaded.report.samples[1].oracle_objective == 95.0);
    CHECK(loaded.log.checkpoints[0].step == 500);
}

TEST_CASE("export_results writes the fixed table format byte-stably") {
    const fs::path dir = fresh_dir("opfenv_export_test");
    std::vector<RunResult> results;
    for (int v = 0; v < 2; ++v) {
        for (int s = 0; s < 3; ++s) {
            RunResult r;
            r.variant = v == 0 ? "a" : "b";
            r.seed = s;
            r.steps = 100;
            r.wall_clock_s = 0.0;
            r.report.n = 4;
            r.report.n_valid = 3;
            r.report.invalid_share_percent = 25.0;
            r.report.mape_percent = 1.5;
            results.push_back(r);
        }
    }
    const std::string path = (dir / "nested" / "results.csv").string();
    export_results(results, path);  // missing directory is created

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "variant,seed,mape_percent,invalid_share_percent,steps,wall_clock_s");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 6);

    std::ostringstream first;
    first << std::ifstream(path).rdbuf();
    export_results(results, path);
    std::ostringstream second;
    second << std::ifstream(path).rdbuf();
    CHECK(first.str() == second.str());
    fs::remove_all(dir);
}

TEST_CASE("scatter diagnostic: undefined correlation for a constant objective") {
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    ScenarioSpec spec = ScenarioSpec::voltage_control_defaults();
    spec.loss_price = 0.0;

    std::vector<std::string> columns{"load0:p_mw", "load0:q_mvar", "gen0:p_mw",
                                     "gen0:price_reactive"};
    Eigen::MatrixXd rows(10, 4);
    RngStream mk(51);
    for (int r = 0; r < 10; ++r) {
        const double p = mk.uniform(0.2, 0.8);
        rows(r, 0) = p;
        rows(r, 1) = 0.3287 * p;
        rows(r, 2) = mk.uniform(0.0, 1.0);
        rows(r, 3) = 0.0;
    }
    Environment env =
        make_voltage_control(grid, spec, split_dataset(Dataset(columns, rows), 0.2), {});
    RngStream rng(52);
    const ScatterResult scatter = scatter_diagnostic(env, 200, rng);
    CHECK(scatter.points.size() > 0);
    CHECK_FALSE(scatter.pearson_r.has_value());
}

TEST_CASE("micro experiment plan: cardinality, shared rows and resume") {
    const fs::path dir = fresh_dir("opfenv_plan_test");
    ExperimentPlan plan;
    plan.grid = load_grid(testutil::data_path("toy_vc.grid"));
    plan.scenario = ScenarioSpec::voltage_control_defaults();
    plan.dataset = testutil::tiny_dataset(1, 1, true, 60);
    plan.variants.push_back({"markov", DesignConfig{}});
    {
        DesignConfig uniform;
        uniform.data_source = DataSource::uniform;
        plan.variants.push_back({"uniform", uniform});
    }
    plan.seeds = {0, 1};
    plan.ddpg.hidden = {8, 8};
    plan.ddpg.batch_size = 16;
    plan.ddpg.warmup_steps = 30;
    plan.ddpg.total_steps = 120;
    plan.ddpg.eval_interval = 60;
    plan.eval_samples = 4;
    plan.oracle.starts = 3;
    plan.oracle.max_evals_per_round = 150;
    plan.out_dir = (dir / "out").string();
    plan.cache_dir = (dir / "cache").string();
    plan.deterministic = true;

    const auto results = run_experiment(plan);
    REQUIRE(results.size() == 4);  // 2 variants x 2 seeds
    for (const auto& result : results) {
        CHECK(result.report.n == 4);
        CHECK_FALSE(result.diverged);
        CHECK(result.wall_clock_s == 0.0);  // deterministic mode
    }

    // Re-running the identical plan resumes from the persisted detail files.
    const auto resumed = run_experiment(plan);
    REQUIRE(resumed.size() == results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
        CHECK(resumed[i].report.invalid_share_percent == results[i].report.invalid_share_percent);
        CHECK(run_result_to_json(resumed[i]) == run_result_to_json(results[i]));
    }
    fs::remove_all(dir);
}
