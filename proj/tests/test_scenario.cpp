#include <doctest.h>

#include "helpers.hpp"
#include "opfenv/scenario.hpp"

using namespace opfenv;

TEST_CASE("voltage-control action map: zero, 3-4-5 substitution and boundaries") {
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    OpfProblem problem = make_problem(grid, ScenarioSpec::voltage_control_defaults());
    problem.grid.generators[0].s_max_mva = 5.0;

    ExogenousState state = testutil::toy_vc_state();
    state.gen_p_mw[0] = 3.0;

    Eigen::VectorXd action(1);
    action << 0.0;
    CHECK(apply_action(problem, state, {action.data(), 1})[0].q_mvar == doctest::Approx(0.0));

    action << 1.0;
    auto gens = apply_action(problem, state, {action.data(), 1});
    CHECK(gens[0].q_mvar == doctest::Approx(4.0));  // sqrt(5^2 - 3^2)
    CHECK(gens[0].p_mw == doctest::Approx(3.0));    // fixed setpoint from the state

    action << -1.0;
    gens = apply_action(problem, state, {action.data(), 1});
    CHECK(gens[0].q_mvar == doctest::Approx(-4.0));
    // Boundary actions stay capability-valid by construction.
    CHECK(std::abs(gens[0].q_mvar) <= reactive_capability_mvar(gens[0], gens[0].p_mw) + 1e-12);
}

TEST_CASE("voltage-control capability error on an impossible fixed setpoint") {
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    const OpfProblem problem = make_problem(grid, ScenarioSpec::voltage_control_defaults());
    ExogenousState state = testutil::toy_vc_state();
    state.gen_p_mw[0] = 99.0;
    Eigen::VectorXd action(1);
    action << 0.5;
    CHECK_THROWS_AS(apply_action(problem, state, {action.data(), 1}), CapabilityError);
}

TEST_CASE("capability headroom is re-derived from each freshly sampled state") {
    const GridModel grid = load_grid(testutil::data_path("toy_vc.grid"));
    Environment env = make_voltage_control(grid, ScenarioSpec::voltage_control_defaults(),
                                           testutil::tiny_dataset(1, 1, true), {});
    RngStream rng(17);
    Eigen::VectorXd action(1);
    action << 1.0;
    for (int i = 0; i < 25; ++i) {
        env.reset(rng);
        const double p = env.current_state().gen_p_mw[0];
        const double s_max = grid.generators[0].s_max_mva;
        const StepOutcome out = env.step({action.data(), 1});
        CHECK(out.info.setpoints[0] ==
              doctest::Approx(std::sqrt(s_max * s_max - p * p)).epsilon(1e-12));
    }
}

TEST_CASE("eco-dispatch action map: zero and full dispatch") {
    const GridModel grid = load_grid(testutil::data_path("toy_ed.grid"));
    const OpfProblem problem = make_problem(grid, ScenarioSpec::eco_dispatch_defaults());
    const ExogenousState state = testutil::toy_ed_state();

    Eigen::VectorXd action(2);
    action << 0.0, 0.0;
    auto gens = apply_action(problem, state, {action.data(), 2});
    CHECK(gens[0].p_mw == 0.0);
    CHECK(gens[1].p_mw == 0.0);

    // With nothing dispatched the external grid covers the load: the import
    // bound must report a violation.
    auto ev = evaluate_action(problem, state, {action.data(), 2});
    REQUIRE(ev.result.converged);
    CHECK_FALSE(ev.report.valid);
    double exchange = 0.0;
    for (const auto& entry : ev.report.entries) {
        if (entry.kind == ConstraintKind::external_exchange) exchange = entry.magnitude;
    }
    CHECK(exchange > 0.0);

    action << 1.0, 1.0;
    gens = apply_action(problem, state, {action.data(), 2});
    CHECK(gens[0].p_mw == doctest::Approx(grid.generators[0].p_max_mw));
    CHECK(gens[1].p_mw == doctest::Approx(grid.generators[1].p_max_mw));
    // In-box dispatch can never exceed the capability bound.
    for (const auto& entry :
         evaluate_action(problem, state, {action.data(), 2}).report.entries) {
        if (entry.kind == ConstraintKind::actuator_capability) {
            CHECK(entry.magnitude == doctest::Approx(0.0));
        }
    }
}

TEST_CASE("balanced dispatch satisfies the exchange constraint") {
    const GridModel grid = load_grid(testutil::data_path("toy_ed.grid"));
    const OpfProblem problem = make_problem(grid, ScenarioSpec::eco_dispatch_defaults());
    const ExogenousState state = testutil::toy_ed_state();

    // The oracle produces a balanced operating point by construction.
    const OracleSolution oracle = reference_optimum(problem, state);
    REQUIRE(oracle.valid);
    const auto ev = evaluate_action(
        problem, state, {oracle.action.data(), static_cast<std::size_t>(oracle.action.size())});
    const double dispatched = ev.setpoints.sum();
    const double load = state.load_p_mw.sum();
    CHECK(dispatched >= load);  // covers the load plus losses
    CHECK(dispatched <= load + 0.5);
    CHECK(ev.result.ext_p_mw <= 1e-6);
    CHECK(ev.result.ext_p_mw >= grid.external_grid().p_exchange_bounds_mw.first - 1e-6);
}

TEST_CASE("eco-dispatch headroom precondition") {
    GridModel grid = load_grid(testutil::data_path("toy_ed.grid"));
    for (auto& gen : grid.generators) gen.p_max_mw = 0.1;  // total 0.2 < peak load
    CHECK_THROWS_AS(make_eco_dispatch(grid, ScenarioSpec::eco_dispatch_defaults(),
                                      testutil::tiny_dataset(2, 2, false), DesignConfig{}),
                    InfeasibleSpec);
}

TEST_CASE("bundled desk scenarios preserve the action-space contrast") {
    const GridModel lv = load_grid(testutil::data_path("lv_desk.grid"));
    const GridModel hv = load_grid(testutil::data_path("hv_desk.grid"));
    const OpfProblem vc = make_problem(lv, ScenarioSpec::voltage_control_defaults());
    const OpfProblem ed = make_problem(hv, ScenarioSpec::eco_dispatch_defaults());
    CHECK(action_box(vc).dims() == 3);
    CHECK(action_box(ed).dims() == 8);
    CHECK(action_box(ed).dims() > action_box(vc).dims());
}

TEST_CASE("scenario default penalty factors carry the published values") {
    CHECK(ScenarioSpec::voltage_control_defaults().penalties.voltage_band == 500.0);
    CHECK(ScenarioSpec::eco_dispatch_defaults().penalties.voltage_band == 10000.0);
}

TEST_CASE("default profile config mirrors the grid and scenario") {
    const GridModel grid = load_grid(testutil::data_path("lv_desk.grid"));
    const ScenarioSpec spec = ScenarioSpec::voltage_control_defaults();
    const SyntheticProfileConfig config = default_profile_config(grid, spec, 480, 3);

    REQUIRE(config.loads.size() == grid.loads.size());
    for (std::size_t l = 0; l < config.loads.size(); ++l) {
        CHECK(config.loads[l].base_p_mw == grid.loads[l].p_mw);
    }
    REQUIRE(config.generators.size() == grid.generators.size());
    for (std::size_t g = 0; g < config.generators.size(); ++g) {
        CHECK(config.generators[g].p_base_mw ==
              doctest::Approx(0.8 * grid.generators[g].s_max_mva));
        CHECK(config.generators[g].price_min == spec.reactive_price_range.first);
        CHECK(config.generators[g].price_max == spec.reactive_price_range.second);
    }
    CHECK(config.price_quantity == "price_reactive");

    const Dataset data = generate_profiles(config);
    CHECK(data.n_rows() == 480);
    CHECK(data.has_column("gen0:p_mw"));
    CHECK(data.has_column("gen0:price_reactive"));
}
