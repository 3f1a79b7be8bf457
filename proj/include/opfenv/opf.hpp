#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "opfenv/grid.hpp"
#include "opfenv/powerflow.hpp"
#include "opfenv/state.hpp"

namespace opfenv {

struct CapabilityError : ValidationError {
    using ValidationError::ValidationError;
};

struct NegativePrice : ValidationError {
    using ValidationError::ValidationError;
};

enum class ObjectiveKind { voltage_control, eco_dispatch };

enum class ConstraintKind {
    voltage_band,
    line_loading,
    external_exchange,
    actuator_capability,
    non_convergence,
};

const char* constraint_kind_name(ConstraintKind kind);

/// One linear penalty factor per constraint class.
struct PenaltyFactors {
    double voltage_band = 0.0;
    double line_loading = 0.0;
    double external_exchange = 0.0;
    double actuator_capability = 0.0;
    double non_convergence = 0.0;

    static PenaltyFactors uniform(double alpha) {
        return {alpha, alpha, alpha, alpha, alpha};
    }
    double of(ConstraintKind kind) const;
    double& of(ConstraintKind kind);
};

struct ViolationEntry {
    ConstraintKind kind;
    double magnitude = 0.0;  // normalized units, >= 0
    double alpha = 0.0;
};

struct ViolationReport {
    std::vector<ViolationEntry> entries;
    double total_violation = 0.0;
    bool valid = false;
    double validity_tolerance = 1e-6;
};

enum class ExchangeBoundMode { active_power, reactive_power };

/// A concrete constrained OPF instance over one grid.
struct OpfProblem {
    GridModel grid;
    ObjectiveKind kind = ObjectiveKind::voltage_control;
    std::vector<int> actuators;  // indices into grid.generators
    PenaltyFactors penalties;
    double validity_tolerance = 1e-6;
    // Economic dispatch restricts the slack exchange; the default bounds the
    // active exchange so that local generators must carry the load. Voltage
    // control always bounds |Q_ext| regardless of this switch.
    ExchangeBoundMode exchange_mode = ExchangeBoundMode::active_power;
    double loss_price = 50.0;  // currency/MWh on P_loss (voltage control only)
    SolverSettings solver;
};

struct ActionBox {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    int dims() const { return static_cast<int>(lo.size()); }
    Eigen::VectorXd midpoint() const { return 0.5 * (lo + hi); }
    Eigen::VectorXd clip(const Eigen::VectorXd& a) const {
        return a.cwiseMax(lo).cwiseMin(hi);
    }
};

/// [-1,1]^G for voltage control, [0,1]^G for economic dispatch.
ActionBox action_box(const OpfProblem& problem);

/// Reactive headroom sqrt(s_max^2 - p^2) of one generator at fixed active
/// power p. Throws CapabilityError when p exceeds s_max.
double reactive_capability_mvar(const Generator& gen, double p_mw);

/// Generator records with the exogenous state and the action applied:
/// setpoints and prices ready for objective evaluation.
std::vector<Generator> apply_action(const OpfProblem& problem, const ExogenousState& state,
                                    std::span<const double> action);

/// J = P_loss * loss_price + sum_g Q_g^2 * price_reactive_g   [currency/h]
double objective_voltage_control(const PowerFlowResult& result,
                                 const std::vector<Generator>& generators, double loss_price);

/// J = sum_g P_g * price_active_g   [currency/h]
double objective_eco_dispatch(const std::vector<Generator>& generators);

/// Violation magnitudes per constraint class. Handles non-converged results
/// by reporting the dedicated non_convergence entry of magnitude 1.
ViolationReport evaluate_constraints(const OpfProblem& problem, const PowerFlowResult& result,
                                     const std::vector<Generator>& generators);

/// P(s) = sum_c alpha_c * v_c
double aggregate_penalty(const ViolationReport& report);

bool is_valid(const ViolationReport& report);

/// Everything one agent-environment physics evaluation produces.
struct ActionEvaluation {
    PowerFlowResult result;
    std::vector<Generator> generators;
    Eigen::VectorXd setpoints;  // applied actuator setpoints (Mvar or MW)
    double objective = 0.0;     // 0 when the power flow did not converge
    double penalty = 0.0;
    ViolationReport report;
};

ActionEvaluation evaluate_action(const OpfProblem& problem, const ExogenousState& state,
                                 std::span<const double> action);

struct OracleSolution {
    Eigen::VectorXd action;
    Eigen::VectorXd setpoints;
    double objective_value = 0.0;  // J*
    bool valid = false;
    int starts = 0;
    std::int64_t evaluations = 0;
};

struct OracleOptions {
    int starts = 10;  // midpoint + 9 seeded-random
    std::int64_t max_evals_per_round = 1500;
    double initial_step = 0.25;  // fraction of the box range
    double min_step = 1e-4;
    std::uint64_t seed = 0;
};

/// Reference optimum via multi-start adaptive pattern search on the merit
/// J + mu * P, with mu escalated 10x then 100x until the incumbent is valid.
/// Returns the best valid solution over all starts (ties: lowest start
/// index); valid=false when no start reaches validity.
OracleSolution reference_optimum(const OpfProblem& problem, const ExogenousState& state,
                                 const OracleOptions& options = {});

}  // namespace opfenv
