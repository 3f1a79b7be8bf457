#include <doctest.h>

#include "helpers.hpp"
#include "opfenv/env.hpp"
#include "opfenv/scenario.hpp"

using namespace opfenv;

namespace {

Environment toy_vc_env(DesignConfig design, std::int64_t rows = 50) {
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    return make_voltage_control(grid, ScenarioSpec::voltage_control_defaults(),
                                testutil::tiny_dataset(1, 1, true, rows), design);
}

Environment toy_ed_env(DesignConfig design, std::int64_t rows = 50) {
    const GridModel grid = load_grid(testutil::data_path("toy_ed.grid"));
    return make_eco_dispatch(grid, ScenarioSpec::eco_dispatch_defaults(),
                             testutil::tiny_dataset(2, 2, false, rows), design);
}

}  // namespace

TEST_CASE("design config invariants") {
    DesignConfig design;
    design.episode_mode = EpisodeMode::n_step;
    design.obs_mode = ObsMode::markov;
    CHECK_THROWS_AS(design.validate(), ConfigError);

    design.obs_mode = ObsMode::redundant;
    CHECK_NOTHROW(design.validate());

    design.n_steps = 0;
    CHECK_THROWS_AS(design.validate(), ConfigError);

    design = DesignConfig{};
    CHECK(design.episode_length() == 1);  // one_step pins the length regardless of n_steps
    design.penalty_factors = PenaltyFactors::uniform(-1.0);
    CHECK_THROWS_AS(design.validate(), ConfigError);
}

TEST_CASE("time-series sampling draws verbatim training rows") {
    Environment env = toy_vc_env({});
    RngStream rng(3);
    for (int i = 0; i < 100; ++i) {
        const ExogenousState state = env.sample_state(rng);
        REQUIRE(state.row_id >= 0);
        CHECK(state.row_id < env.dataset().n_train());
        const int col = env.state_columns().load_p[0];
        CHECK(state.load_p_mw[0] == env.dataset().at(state.row_id, col));
    }
}

TEST_CASE("single-row dataset always yields that row") {
    std::vector<std::string> columns{"load0:p_mw", "load0:q_mvar", "gen0:p_mw",
                                     "gen0:price_reactive"};
    Eigen::MatrixXd rows(2, 4);
    rows << 0.7, 0.23, 1.0, 0.4,  // train row
        0.5, 0.16, 0.9, 0.2;      // test row
    Dataset dataset = split_dataset(Dataset(columns, rows), 0.5);
    REQUIRE(dataset.n_train() == 1);

    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    Environment env =
        make_voltage_control(grid, ScenarioSpec::voltage_control_defaults(), dataset, {});
    RngStream rng(9);
    for (int i = 0; i < 10; ++i) {
        CHECK(env.sample_state(rng).row_id == 0);
    }
}

TEST_CASE("uniform sampler: support, degenerate ranges and mean") {
    std::vector<std::string> columns{"load0:p_mw", "load0:q_mvar", "gen0:p_mw",
                                     "gen0:price_reactive"};
    Eigen::MatrixXd rows(3, 4);
    rows << 0.2, 0.1, 5.0, 0.0,
        1.0, 0.4, 5.0, 1.0,
        0.6, 0.2, 5.0, 0.5;
    const Dataset dataset(columns, rows);
    StateColumns cols{{0}, {1}, {2}, {3}};

    RngStream rng(21);
    double sum = 0.0;
    double lo = 1e9, hi = -1e9;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const ExogenousState state = sample_uniform(dataset, cols, rng);
        CHECK(state.gen_p_mw[0] == 5.0);  // degenerate [5,5] stays constant
        const double p = state.load_p_mw[0];
        CHECK(p >= 0.2);
        CHECK(p <= 1.0);
        sum += p;
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    CHECK(sum / n == doctest::Approx(0.6).epsilon(0.01));  // midpoint of [0.2, 1.0]
    CHECK(lo < 0.25);
    CHECK(hi > 0.95);
}

TEST_CASE("normal sampler: zero sigma pins the mean, draws stay clipped") {
    std::vector<std::string> columns{"load0:p_mw", "load0:q_mvar", "gen0:p_mw",
                                     "gen0:price_reactive"};
    Eigen::MatrixXd rows(2, 4);
    rows << 0.0, 0.0, 0.0, 0.0,
        1.0, 1.0, 1.0, 1.0;  // ranges [0,1] with mean 0.5
    const Dataset dataset(columns, rows);
    StateColumns cols{{0}, {1}, {2}, {3}};

    RngStream rng(22);
    for (int i = 0; i < 10; ++i) {
        const ExogenousState state = sample_normal(dataset, cols, 0.0, rng);
        CHECK(state.load_p_mw[0] == doctest::Approx(0.5).epsilon(1e-12));
    }

    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const ExogenousState state = sample_normal(dataset, cols, 0.3, rng);
        const double p = state.load_p_mw[0];
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        sum += p;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("initial actions: midpoints and in-box random draws") {
    ActionBox unit_box{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
    ActionBox sym_box{Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Ones(2)};

    RngStream rng(4);
    CHECK(initial_action(unit_box, InitActionMode::fixed, rng)[0] == 0.5);
    CHECK(initial_action(sym_box, InitActionMode::fixed, rng)[1] == 0.0);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::VectorXd a = initial_action(sym_box, InitActionMode::random, rng);
        CHECK(a.minCoeff() >= -1.0);
        CHECK(a.maxCoeff() <= 1.0);
    }
}

TEST_CASE("reward laws") {
    CHECK(reward_summation(52.0, 0.0) == doctest::Approx(-52.0));
    CHECK(reward_summation(52.0, 5.0) == doctest::Approx(-57.0));
    CHECK(reward_summation(53.0, 5.0) < reward_summation(52.0, 5.0));
    CHECK(reward_summation(52.0, 6.0) < reward_summation(52.0, 5.0));

    CHECK(reward_replacement(10.0, 123.0, true, 50.0) == doctest::Approx(40.0));
    CHECK(reward_replacement(10.0, 5.0, false, 50.0) == doctest::Approx(-5.0));
    // Valid states with J <= k score >= 0 while invalid states with P > 0 score < 0.
    CHECK(reward_replacement(49.0, 0.0, true, 50.0) >= 0.0);
    CHECK(reward_replacement(0.0, 0.1, false, 50.0) < 0.0);
}

TEST_CASE("offset calibration core: max and mean of the observed sample") {
    const std::vector<double> observed{10.0, 20.0, 100.0};
    CHECK(offset_from_samples(observed, OffsetMode::min) == doctest::Approx(100.0));
    CHECK(offset_from_samples(observed, OffsetMode::mean) == doctest::Approx(130.0 / 3.0));
}

TEST_CASE("calibration on a zero-price scenario yields k = 0 in both modes") {
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    ScenarioSpec spec = ScenarioSpec::voltage_control_defaults();
    spec.loss_price = 0.0;

    std::vector<std::string> columns{"load0:p_mw", "load0:q_mvar", "gen0:p_mw",
                                     "gen0:price_reactive"};
    Eigen::MatrixXd rows(10, 4);
    RngStream mk(31);
    for (int r = 0; r < 10; ++r) {
        const double p = mk.uniform(0.2, 1.0);
        rows(r, 0) = p;
        rows(r, 1) = 0.3287 * p;
        rows(r, 2) = mk.uniform(0.0, 1.2);
        rows(r, 3) = 0.0;  // all prices zero
    }
    Environment env = make_voltage_control(grid, spec, split_dataset(Dataset(columns, rows), 0.2), {});

    RngStream rng(8);
    CHECK(calibrate_offset(env, OffsetMode::min, rng, 50).k == doctest::Approx(0.0));
    CHECK(calibrate_offset(env, OffsetMode::mean, rng, 50).k == doctest::Approx(0.0));
}

TEST_CASE("one-step episodes are terminal on every step") {
    Environment env = toy_vc_env({});
    RngStream rng(5);
    for (int episode = 0; episode < 5; ++episode) {
        env.reset(rng);
        const Eigen::VectorXd action = Eigen::VectorXd::Zero(1);
        const StepOutcome out = env.step({action.data(), 1});
        CHECK(out.terminal);
    }
}

TEST_CASE("n-step episodes terminate exactly at n and freeze the exogenous state") {
    DesignConfig design;
    design.episode_mode = EpisodeMode::n_step;
    design.obs_mode = ObsMode::redundant;
    design.init_action_mode = InitActionMode::random;
    design.n_steps = 5;
    Environment env = toy_vc_env(design);

    RngStream rng(6);
    env.reset(rng);
    const Eigen::VectorXd action = Eigen::VectorXd::Constant(1, 0.3);
    std::vector<double> rewards;
    for (int t = 0; t < 5; ++t) {
        const StepOutcome out = env.step({action.data(), 1});
        rewards.push_back(out.reward);
        CHECK(out.terminal == (t == 4));
    }
    // Same action on the same frozen state gives the same physics.
    for (std::size_t t = 1; t < rewards.size(); ++t) {
        CHECK(rewards[t] == doctest::Approx(rewards[0]).epsilon(1e-12));
    }
}

TEST_CASE("markov observation: length, no power flow, purity and determinism") {
    Environment env = toy_vc_env({});
    // 2 * |loads| + |prices| + |fixed setpoints| = 2 + 1 + 1.
    CHECK(env.observation_layout().size() == 4);

    RngStream rng_a(7);
    const long calls_before = env.pf_calls();
    const Observation obs_a = env.reset(rng_a);
    CHECK(env.pf_calls() == calls_before);  // no solver call in markov reset

    RngStream rng_b(7);
    const Observation obs_b = env.reset(rng_b);
    REQUIRE(obs_a.values.size() == obs_b.values.size());
    for (int i = 0; i < obs_a.values.size(); ++i) {
        CHECK(obs_a.values[i] == obs_b.values[i]);  // bit-for-bit
    }

    // Purity: the same dataset row always produces the same observation.
    RngStream rng_c(8);
    const Observation row_a = env.reset_to_row(2, rng_c);
    const Observation row_b = env.reset_to_row(2, rng_c);
    for (int i = 0; i < row_a.values.size(); ++i) {
        CHECK(row_a.values[i] == row_b.values[i]);
    }
}

TEST_CASE("redundant observation appends system variables and runs one power flow") {
    DesignConfig design;
    design.obs_mode = ObsMode::redundant;
    design.init_action_mode = InitActionMode::fixed;
    Environment env = toy_vc_env(design);

    // markov(4) + buses(2) + branches(1) + ext p/q(2).
    CHECK(env.observation_layout().size() == 9);

    RngStream rng(9);
    const long calls_before = env.pf_calls();
    env.reset(rng);
    CHECK(env.pf_calls() == calls_before + 1);

    DesignConfig random_init = design;
    random_init.init_action_mode = InitActionMode::random;
    Environment env_random = toy_vc_env(random_init);
    // Random initial action must itself be observable.
    CHECK(env_random.observation_layout().size() == 10);
}

TEST_CASE("observations stay inside [-1, 1] and are finite") {
    DesignConfig design;
    design.obs_mode = ObsMode::redundant;
    design.init_action_mode = InitActionMode::random;
    design.data_source = DataSource::uniform;
    Environment env = toy_vc_env(design);
    RngStream rng(10);
    for (int i = 0; i < 50; ++i) {
        const Observation obs = env.reset(rng);
        Eigen::VectorXd action(1);
        action[0] = rng.uniform(-1.0, 1.0);
        const StepOutcome out = env.step({action.data(), 1});
        for (int k = 0; k < out.observation.values.size(); ++k) {
            CHECK(std::isfinite(out.observation.values[k]));
            CHECK(out.observation.values[k] >= -1.0);
            CHECK(out.observation.values[k] <= 1.0);
        }
        CHECK(std::isfinite(obs.values.minCoeff()));
    }
}

TEST_CASE("observation scaling: slot minimum, midpoint and degenerate ranges") {
    ObservationLayout layout;
    layout.slots = {{"a", 0.0, 2.0}, {"b", 0.0, 2.0}, {"c", 5.0, 5.0}};
    Eigen::VectorXd raw(3);
    raw << 0.0, 1.0, 5.0;
    const Eigen::VectorXd scaled = scale_observation(raw, layout);
    CHECK(scaled[0] == doctest::Approx(-1.0));
    CHECK(scaled[1] == doctest::Approx(0.0));
    CHECK(scaled[2] == doctest::Approx(0.0));
}

TEST_CASE("reward consistency: info recomputes the reward under both modes") {
    for (const bool replacement : {false, true}) {
        CAPTURE(replacement);
        DesignConfig design;
        if (replacement) {
            design.reward_mode = RewardMode::replacement;
            design.offset_k = 75.0;
        }
        Environment env = toy_ed_env(design);
        RngStream rng(12);
        for (int i = 0; i < 30; ++i) {
            env.reset(rng);
            Eigen::VectorXd action(2);
            action << rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0);
            const StepOutcome out = env.step({action.data(), 2});
            const double expected =
                replacement ? reward_replacement(out.info.objective, out.info.penalty,
                                                 out.info.report.valid, 75.0)
                            : reward_summation(out.info.objective, out.info.penalty);
            CHECK(out.reward == expected);
        }
    }
}

TEST_CASE("out-of-box actions are clipped and flagged, not thrown") {
    Environment env = toy_vc_env({});
    RngStream rng(13);
    env.reset(rng);
    Eigen::VectorXd action(1);
    action << 3.5;
    const StepOutcome out = env.step({action.data(), 1});
    CHECK(out.info.action_clipped);
    CHECK(out.info.setpoints[0] <= env.problem().grid.generators[0].s_max_mva);

    env.reset(rng);
    action << 0.5;
    CHECK_FALSE(env.step({action.data(), 1}).info.action_clipped);
}

TEST_CASE("replacement reward without a calibrated offset is rejected") {
    DesignConfig design;
    design.reward_mode = RewardMode::replacement;
    Environment env = toy_vc_env(design);
    RngStream rng(14);
    env.reset(rng);
    const Eigen::VectorXd action = Eigen::VectorXd::Zero(1);
    CHECK_THROWS_AS(env.step({action.data(), 1}), ConfigError);
}
