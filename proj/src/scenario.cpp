#include "opfenv/scenario.hpp"

#include <algorithm>
#include <numeric>

namespace opfenv {

ScenarioSpec ScenarioSpec::voltage_control_defaults() {
    ScenarioSpec spec;
    spec.kind = ObjectiveKind::voltage_control;
    spec.penalties = PenaltyFactors::uniform(500.0);
    return spec;
}

ScenarioSpec ScenarioSpec::eco_dispatch_defaults() {
    ScenarioSpec spec;
    spec.kind = ObjectiveKind::eco_dispatch;
    spec.penalties = PenaltyFactors::uniform(10000.0);
    return spec;
}

OpfProblem make_problem(const GridModel& grid, const ScenarioSpec& spec) {
    const auto issues = validate_grid(grid);
    if (!issues.empty()) {
        throw ValidationError("scenario grid failed validation: " + issues.front().message);
    }
    OpfProblem problem;
    problem.grid = grid;
    problem.kind = spec.kind;
    problem.actuators = spec.actuators;
    if (problem.actuators.empty()) {
        problem.actuators.resize(grid.generators.size());
        std::iota(problem.actuators.begin(), problem.actuators.end(), 0);
    }
    for (int g : problem.actuators) {
        if (g < 0 || g >= static_cast<int>(grid.generators.size())) {
            throw ValidationError("actuator index " + std::to_string(g) +
                                  " does not name a generator");
        }
    }
    problem.penalties = spec.penalties;
    problem.validity_tolerance = spec.validity_tolerance;
    problem.exchange_mode = spec.exchange_mode;
    problem.loss_price = spec.loss_price;
    problem.solver = spec.solver;
    return problem;
}

Environment make_voltage_control(const GridModel& grid, const ScenarioSpec& spec,
                                 Dataset dataset, DesignConfig design) {
    if (spec.kind != ObjectiveKind::voltage_control) {
        throw ConfigError("make_voltage_control needs a voltage_control scenario");
    }
    OpfProblem problem = make_problem(grid, spec);
    bool any_headroom = false;
    for (int g : problem.actuators) {
        const Generator& gen = grid.generators[static_cast<std::size_t>(g)];
        if (gen.s_max_mva > gen.p_mw) any_headroom = true;
    }
    if (!any_headroom) {
        throw InfeasibleSpec("no actuator has reactive headroom (s_max <= current P)");
    }
    if (design.penalty_factors) problem.penalties = *design.penalty_factors;
    return Environment(std::move(problem), std::move(dataset), design);
}

Environment make_eco_dispatch(const GridModel& grid, const ScenarioSpec& spec, Dataset dataset,
                              DesignConfig design) {
    if (spec.kind != ObjectiveKind::eco_dispatch) {
        throw ConfigError("make_eco_dispatch needs an eco_dispatch scenario");
    }
    OpfProblem problem = make_problem(grid, spec);

    double p_max_total = 0.0;
    for (int g : problem.actuators) {
        p_max_total += grid.generators[static_cast<std::size_t>(g)].p_max_mw;
    }
    StateColumns probe;
    double peak_load = 0.0;
    for (std::size_t l = 0; l < grid.loads.size(); ++l) {
        const int col = dataset.column_index("load" + std::to_string(l) + ":p_mw");
        probe.load_p.push_back(col);
    }
    for (std::int64_t r = 0; r < dataset.n_rows(); ++r) {
        double total = 0.0;
        for (int col : probe.load_p) total += dataset.at(r, col);
        peak_load = std::max(peak_load, total);
    }
    if (p_max_total < peak_load) {
        throw InfeasibleSpec("generation capability " + std::to_string(p_max_total) +
                             " MW is below the dataset peak load " + std::to_string(peak_load) +
                             " MW");
    }
    if (design.penalty_factors) problem.penalties = *design.penalty_factors;
    return Environment(std::move(problem), std::move(dataset), design);
}

Environment make_environment(const GridModel& grid, const ScenarioSpec& spec, Dataset dataset,
                             DesignConfig design) {
    return spec.kind == ObjectiveKind::voltage_control
               ? make_voltage_control(grid, spec, std::move(dataset), design)
               : make_eco_dispatch(grid, spec, std::move(dataset), design);
}

SyntheticProfileConfig default_profile_config(const GridModel& grid, const ScenarioSpec& spec,
                                              std::int64_t horizon, std::uint64_t seed) {
    SyntheticProfileConfig config;
    config.horizon = horizon;
    config.seed = seed;
    config.price_quantity =
        spec.kind == ObjectiveKind::voltage_control ? "price_reactive" : "price_active";
    // Dispatch scenarios run close to the generation capability; a calmer
    // load series keeps the simultaneous peak clear of it.
    config.noise = spec.kind == ObjectiveKind::eco_dispatch ? 0.05 : 0.1;

    // Alternate the archetypes over the loads and stagger their daily phase
    // so that column peaks do not all coincide in time.
    static constexpr int kOffsets[] = {-180, -90, 0, 90, 180};
    for (std::size_t l = 0; l < grid.loads.size(); ++l) {
        LoadProfileSpec load;
        load.base_p_mw = grid.loads[l].p_mw;
        load.profile = l % 2 == 0 ? ProfileClass::household : ProfileClass::commercial;
        load.offset_minutes = kOffsets[(l / 2) % 5];
        config.loads.push_back(load);
    }
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        GenProfileSpec gen;
        if (spec.kind == ObjectiveKind::voltage_control) {
            gen.price_min = spec.reactive_price_range.first;
            gen.price_max = spec.reactive_price_range.second;
            gen.p_base_mw = 0.8 * grid.generators[g].s_max_mva;
            gen.profile = g % 2 == 0 ? ProfileClass::commercial : ProfileClass::household;
        } else {
            gen.price_min = spec.active_price_range.first;
            gen.price_max = spec.active_price_range.second;
            gen.p_base_mw = 0.0;
        }
        config.generators.push_back(gen);
    }
    return config;
}

}  // namespace opfenv
