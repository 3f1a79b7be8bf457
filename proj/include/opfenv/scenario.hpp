#pragma once

#include <utility>
#include <vector>

#include "opfenv/env.hpp"
#include "opfenv/profiles.hpp"

namespace opfenv {

struct InfeasibleSpec : ValidationError {
    using ValidationError::ValidationError;
};

/// Everything that defines one concrete use case on one grid.
struct ScenarioSpec {
    ObjectiveKind kind = ObjectiveKind::voltage_control;
    std::vector<int> actuators;  // empty = every generator
    PenaltyFactors penalties = PenaltyFactors::uniform(500.0);
    double validity_tolerance = 1e-6;
    double loss_price = 50.0;                                  // voltage control
    std::pair<double, double> reactive_price_range{0.0, 1.0};  // voltage control
    std::pair<double, double> active_price_range{20.0, 100.0};  // eco dispatch
    ExchangeBoundMode exchange_mode = ExchangeBoundMode::active_power;
    SolverSettings solver;

    static ScenarioSpec voltage_control_defaults();
    static ScenarioSpec eco_dispatch_defaults();
};

OpfProblem make_problem(const GridModel& grid, const ScenarioSpec& spec);

/// Reactive-setpoint environment: a in [-1,1]^G, Q_g = a_g * sqrt(s_max^2 - P_g^2)
/// with P_g sampled per reset. Throws CapabilityError when a sampled P_g
/// exceeds s_max.
Environment make_voltage_control(const GridModel& grid, const ScenarioSpec& spec,
                                 Dataset dataset, DesignConfig design);

/// Active-dispatch environment: a in [0,1]^G, P_g = a_g * p_max_g. Requires
/// enough generation headroom for the dataset peak (throws InfeasibleSpec).
Environment make_eco_dispatch(const GridModel& grid, const ScenarioSpec& spec, Dataset dataset,
                              DesignConfig design);

Environment make_environment(const GridModel& grid, const ScenarioSpec& spec, Dataset dataset,
                             DesignConfig design);

/// Profile-generator configuration matching one grid and scenario: load bases
/// from the grid's load records, generator prices from the scenario ranges,
/// exogenous generator setpoints (voltage control) capped at 0.8 * s_max.
SyntheticProfileConfig default_profile_config(const GridModel& grid, const ScenarioSpec& spec,
                                              std::int64_t horizon = 3360,
                                              std::uint64_t seed = 1);

}  // namespace opfenv
