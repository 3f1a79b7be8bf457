#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "opfenv/grid.hpp"

namespace opfenv {

/// Net power injection per bus in MW/Mvar, generation positive, ordered by
/// GridIndex (same order as GridModel::buses). Every non-slack bus is covered;
/// zero where no unit connects.
struct InjectionSet {
    Eigen::VectorXd p_mw;
    Eigen::VectorXd q_mvar;

    static InjectionSet zeros(const GridModel& grid);
    /// Injections implied by the unit records currently stored in the grid.
    static InjectionSet from_units(const GridModel& grid);
};

struct SolverSettings {
    double tolerance_pu = 1e-8;  // max per-bus power mismatch
    int max_iterations = 30;
    bool flat_start = true;  // 1.0 at 0 rad; the only implemented start
};

struct PowerFlowResult {
    bool converged = false;
    int iterations = 0;
    Eigen::VectorXd v_mag_pu;    // per bus
    Eigen::VectorXd v_ang_rad;   // per bus
    std::vector<std::complex<double>> s_from_mva;  // per branch, flow into branch at from side
    std::vector<std::complex<double>> s_to_mva;    // per branch, flow into branch at to side
    Eigen::VectorXd loading_percent;               // per branch
    double total_losses_mw = 0.0;
    double ext_p_mw = 0.0;   // slack exchange, import into the network positive
    double ext_q_mvar = 0.0;
    double max_mismatch_pu = 0.0;
};

/// Newton-Raphson AC power flow in polar form; one slack, all other buses PQ.
/// Non-convergence is reported through the flag, never thrown. Throws
/// NumericalError only when the Jacobian becomes singular at an iterate.
PowerFlowResult solve_power_flow(const GridModel& grid, const InjectionSet& injections,
                                 const SolverSettings& settings = {});

/// 100 * max(|S_from|, |S_to|) / rating. Throws NotConverged.
double branch_loading(const PowerFlowResult& result, const GridModel& grid, int branch_index);

/// Sum of P_from + P_to over all branches (MW). Throws NotConverged.
double total_losses(const PowerFlowResult& result);

}  // namespace opfenv
