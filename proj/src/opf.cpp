#include "opfenv/opf.hpp"

#include <algorithm>
#include <cmath>

#include "opfenv/rng.hpp"

namespace opfenv {

const char* constraint_kind_name(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::voltage_band: return "voltage_band";
        case ConstraintKind::line_loading: return "line_loading";
        case ConstraintKind::external_exchange: return "external_exchange";
        case ConstraintKind::actuator_capability: return "actuator_capability";
        case ConstraintKind::non_convergence: return "non_convergence";
    }
    return "?";
}

double PenaltyFactors::of(ConstraintKind kind) const {
    return const_cast<PenaltyFactors*>(this)->of(kind);
}

double& PenaltyFactors::of(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::voltage_band: return voltage_band;
        case ConstraintKind::line_loading: return line_loading;
        case ConstraintKind::external_exchange: return external_exchange;
        case ConstraintKind::actuator_capability: return actuator_capability;
        case ConstraintKind::non_convergence: return non_convergence;
    }
    return non_convergence;
}

ActionBox action_box(const OpfProblem& problem) {
    const int dims = static_cast<int>(problem.actuators.size());
    ActionBox box;
    if (problem.kind == ObjectiveKind::voltage_control) {
        box.lo = Eigen::VectorXd::Constant(dims, -1.0);
    } else {
        box.lo = Eigen::VectorXd::Zero(dims);
    }
    box.hi = Eigen::VectorXd::Ones(dims);
    return box;
}

double reactive_capability_mvar(const Generator& gen, double p_mw) {
    if (p_mw > gen.s_max_mva) {
        throw CapabilityError("generator at bus " + std::to_string(gen.bus) + ": active setpoint " +
                              std::to_string(p_mw) + " MW exceeds s_max " +
                              std::to_string(gen.s_max_mva) + " MVA");
    }
    return std::sqrt(std::max(0.0, gen.s_max_mva * gen.s_max_mva - p_mw * p_mw));
}

std::vector<Generator> apply_action(const OpfProblem& problem, const ExogenousState& state,
                                    std::span<const double> action) {
    if (action.size() != problem.actuators.size()) {
        throw ShapeMismatch("action has " + std::to_string(action.size()) + " entries, expected " +
                            std::to_string(problem.actuators.size()));
    }
    std::vector<Generator> gens = problem.grid.generators;
    for (std::size_t g = 0; g < gens.size(); ++g) {
        if (problem.kind == ObjectiveKind::voltage_control) {
            gens[g].p_mw = state.gen_p_mw[static_cast<int>(g)];
            gens[g].q_mvar = 0.0;
            gens[g].price_reactive = state.gen_price[static_cast<int>(g)];
        } else {
            gens[g].p_mw = 0.0;
            gens[g].q_mvar = 0.0;
            gens[g].price_active = state.gen_price[static_cast<int>(g)];
        }
    }
    for (std::size_t a = 0; a < problem.actuators.size(); ++a) {
        Generator& gen = gens[static_cast<std::size_t>(problem.actuators[a])];
        if (problem.kind == ObjectiveKind::voltage_control) {
            gen.q_mvar = action[a] * reactive_capability_mvar(gen, gen.p_mw);
        } else {
            gen.p_mw = action[a] * gen.p_max_mw;
        }
    }
    return gens;
}

double objective_voltage_control(const PowerFlowResult& result,
                                 const std::vector<Generator>& generators, double loss_price) {
    if (!result.converged) throw NotConverged("objective requires a converged power flow");
    if (loss_price < 0.0) throw NegativePrice("loss price must be >= 0");
    double j = total_losses(result) * loss_price;
    for (const auto& gen : generators) {
        if (gen.price_reactive < 0.0) throw NegativePrice("reactive price must be >= 0");
        j += gen.q_mvar * gen.q_mvar * gen.price_reactive;
    }
    return j;
}

double objective_eco_dispatch(const std::vector<Generator>& generators) {
    double j = 0.0;
    for (const auto& gen : generators) {
        if (gen.price_active < 0.0) throw NegativePrice("active price must be >= 0");
        j += gen.p_mw * gen.price_active;
    }
    return j;
}

ViolationReport evaluate_constraints(const OpfProblem& problem, const PowerFlowResult& result,
                                     const std::vector<Generator>& generators) {
    ViolationReport report;
    report.validity_tolerance = problem.validity_tolerance;

    if (!result.converged) {
        report.entries.push_back(
            {ConstraintKind::non_convergence, 1.0, problem.penalties.non_convergence});
        report.total_violation = 1.0;
        report.valid = false;
        return report;
    }

    const GridModel& grid = problem.grid;
    const double base = grid.base_mva;

    double voltage = 0.0;
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        const double u = result.v_mag_pu[static_cast<int>(i)];
        voltage += std::max({0.0, u - grid.buses[i].v_max_pu, grid.buses[i].v_min_pu - u});
    }

    double loading = 0.0;
    for (std::size_t b = 0; b < grid.branches.size(); ++b) {
        loading += std::max(0.0, result.loading_percent[static_cast<int>(b)] - 100.0) / 100.0;
    }

    double exchange = 0.0;
    const ExternalGrid& ext = grid.external_grid();
    if (problem.kind == ObjectiveKind::voltage_control) {
        exchange = std::max(0.0, std::abs(result.ext_q_mvar) - ext.q_exchange_max_mvar) / base;
    } else if (problem.exchange_mode == ExchangeBoundMode::active_power) {
        exchange = (std::max(0.0, result.ext_p_mw - ext.p_exchange_bounds_mw.second) +
                    std::max(0.0, ext.p_exchange_bounds_mw.first - result.ext_p_mw)) /
                   base;
    } else {
        exchange = (std::max(0.0, result.ext_q_mvar) +
                    std::max(0.0, -ext.q_exchange_max_mvar - result.ext_q_mvar)) /
                   base;
    }

    double capability = 0.0;
    for (int g : problem.actuators) {
        const Generator& gen = generators[static_cast<std::size_t>(g)];
        if (problem.kind == ObjectiveKind::voltage_control) {
            const double q_max = reactive_capability_mvar(gen, gen.p_mw);
            capability += std::max(0.0, std::abs(gen.q_mvar) - q_max) / base;
        } else {
            capability +=
                (std::max(0.0, gen.p_mw - gen.p_max_mw) + std::max(0.0, -gen.p_mw)) / base;
        }
    }

    report.entries = {
        {ConstraintKind::voltage_band, voltage, problem.penalties.voltage_band},
        {ConstraintKind::line_loading, loading, problem.penalties.line_loading},
        {ConstraintKind::external_exchange, exchange, problem.penalties.external_exchange},
        {ConstraintKind::actuator_capability, capability, problem.penalties.actuator_capability},
    };
    report.total_violation = voltage + loading + exchange + capability;
    report.valid = true;
    for (const auto& entry : report.entries) {
        if (entry.magnitude > problem.validity_tolerance) report.valid = false;
    }
    return report;
}

double aggregate_penalty(const ViolationReport& report) {
    double penalty = 0.0;
    for (const auto& entry : report.entries) penalty += entry.alpha * entry.magnitude;
    return penalty;
}

bool is_valid(const ViolationReport& report) {
    for (const auto& entry : report.entries) {
        if (entry.magnitude > report.validity_tolerance) return false;
    }
    return true;
}

ActionEvaluation evaluate_action(const OpfProblem& problem, const ExogenousState& state,
                                 std::span<const double> action) {
    ActionEvaluation ev;
    ev.generators = apply_action(problem, state, action);

    const GridIndex index(problem.grid);
    InjectionSet inj = InjectionSet::zeros(problem.grid);
    for (std::size_t l = 0; l < problem.grid.loads.size(); ++l) {
        const int i = index.of_bus(problem.grid.loads[l].bus);
        inj.p_mw[i] -= state.load_p_mw[static_cast<int>(l)];
        inj.q_mvar[i] -= state.load_q_mvar[static_cast<int>(l)];
    }
    for (const auto& gen : ev.generators) {
        const int i = index.of_bus(gen.bus);
        inj.p_mw[i] += gen.p_mw;
        inj.q_mvar[i] += gen.q_mvar;
    }

    ev.result = solve_power_flow(problem.grid, inj, problem.solver);
    ev.report = evaluate_constraints(problem, ev.result, ev.generators);
    ev.penalty = aggregate_penalty(ev.report);

    ev.setpoints.resize(static_cast<int>(problem.actuators.size()));
    for (std::size_t a = 0; a < problem.actuators.size(); ++a) {
        const Generator& gen = ev.generators[static_cast<std::size_t>(problem.actuators[a])];
        ev.setpoints[static_cast<int>(a)] =
            problem.kind == ObjectiveKind::voltage_control ? gen.q_mvar : gen.p_mw;
    }

    if (ev.result.converged) {
        ev.objective = problem.kind == ObjectiveKind::voltage_control
                           ? objective_voltage_control(ev.result, ev.generators, problem.loss_price)
                           : objective_eco_dispatch(ev.generators);
    } else {
        ev.objective = 0.0;
    }
    return ev;
}

namespace {

struct MeritEvaluator {
    const OpfProblem& problem;
    const ExogenousState& state;
    double mu = 1.0;
    std::int64_t evaluations = 0;

    struct Point {
        double merit;
        double objective;
        bool valid;
    };

    Point at(const Eigen::VectorXd& action) {
        ++evaluations;
        const ActionEvaluation ev =
            evaluate_action(problem, state, std::span<const double>(action.data(),
                                                                    static_cast<std::size_t>(action.size())));
        return {ev.objective + mu * ev.penalty, ev.objective, ev.report.valid};
    }
};

/// Compass search with step halving. Polls the coordinate directions first;
/// when those stall it polls pairwise difference directions, which lets the
/// iterate slide along the power-balance boundary that couples actuators.
/// Deterministic.
Eigen::VectorXd pattern_search(MeritEvaluator& merit, const ActionBox& box, Eigen::VectorXd x,
                               const OracleOptions& options) {
    const int dims = box.dims();
    const Eigen::VectorXd range = box.hi - box.lo;
    double step = options.initial_step;
    double fx = merit.at(x).merit;
    std::int64_t budget = options.max_evals_per_round;

    auto poll = [&](const Eigen::VectorXd& direction, double& best_f, Eigen::VectorXd& best_x) {
        Eigen::VectorXd y = x + step * direction;
        for (int i = 0; i < dims; ++i) y[i] = std::clamp(y[i], box.lo[i], box.hi[i]);
        if ((y - x).cwiseAbs().maxCoeff() == 0.0) return;
        const double fy = merit.at(y).merit;
        --budget;
        if (fy < best_f) {
            best_f = fy;
            best_x = y;
        }
    };

    while (step > options.min_step && budget > 0) {
        double best_f = fx;
        Eigen::VectorXd best_x = x;
        for (int i = 0; i < dims && budget > 0; ++i) {
            for (const double sign : {1.0, -1.0}) {
                Eigen::VectorXd direction = Eigen::VectorXd::Zero(dims);
                direction[i] = sign * range[i];
                poll(direction, best_f, best_x);
            }
        }
        if (best_f >= fx && dims > 1) {
            for (int i = 0; i < dims && budget > 0; ++i) {
                for (int j = 0; j < dims; ++j) {
                    if (i == j) continue;
                    Eigen::VectorXd direction = Eigen::VectorXd::Zero(dims);
                    direction[i] = range[i];
                    direction[j] = -range[j];
                    poll(direction, best_f, best_x);
                }
            }
        }
        if (best_f < fx) {
            fx = best_f;
            x = best_x;
        } else {
            step *= 0.5;
        }
    }
    return x;
}

}  // namespace

OracleSolution reference_optimum(const OpfProblem& problem, const ExogenousState& state,
                                 const OracleOptions& options) {
    const ActionBox box = action_box(problem);
    const int dims = box.dims();
    RngStream rng(options.seed, 0x09ac1eULL);

    OracleSolution best;
    best.starts = options.starts;
    std::int64_t evaluations = 0;

    for (int start = 0; start < options.starts; ++start) {
        Eigen::VectorXd x(dims);
        if (start == 0) {
            x = box.midpoint();
        } else {
            for (int i = 0; i < dims; ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
        }

        MeritEvaluator merit{problem, state};
        for (const double mu : {1.0, 10.0, 100.0}) {
            merit.mu = mu;
            x = pattern_search(merit, box, x, options);
            if (merit.at(x).valid) break;
        }
        const auto final_point = merit.at(x);
        evaluations += merit.evaluations;

        if (final_point.valid &&
            (!best.valid || final_point.objective < best.objective_value)) {
            best.valid = true;
            best.objective_value = final_point.objective;
            best.action = x;
        }
    }

    best.evaluations = evaluations;
    if (best.valid) {
        const ActionEvaluation ev = evaluate_action(
            problem, state,
            std::span<const double>(best.action.data(), static_cast<std::size_t>(best.action.size())));
        best.setpoints = ev.setpoints;
    }
    return best;
}

}  // namespace opfenv
