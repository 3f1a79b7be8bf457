#include "opfenv/powerflow.hpp"

#include <cmath>

namespace opfenv {

InjectionSet InjectionSet::zeros(const GridModel& grid) {
    InjectionSet inj;
    inj.p_mw = Eigen::VectorXd::Zero(static_cast<int>(grid.buses.size()));
    inj.q_mvar = Eigen::VectorXd::Zero(static_cast<int>(grid.buses.size()));
    return inj;
}

InjectionSet InjectionSet::from_units(const GridModel& grid) {
    const GridIndex index(grid);
    InjectionSet inj = zeros(grid);
    for (const auto& load : grid.loads) {
        const int i = index.of_bus(load.bus);
        inj.p_mw[i] -= load.p_mw;
        inj.q_mvar[i] -= load.q_mvar;
    }
    for (const auto& gen : grid.generators) {
        const int i = index.of_bus(gen.bus);
        inj.p_mw[i] += gen.p_mw;
        inj.q_mvar[i] += gen.q_mvar;
    }
    return inj;
}

namespace {

Eigen::VectorXcd bus_voltages(const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
    Eigen::VectorXcd v(v_mag.size());
    for (int i = 0; i < v_mag.size(); ++i) {
        v[i] = std::polar(v_mag[i], v_ang[i]);
    }
    return v;
}

/// Fill branch flows, losses and slack exchange from solved voltages.
void fill_result_quantities(const GridModel& grid, const GridIndex& index,
                            const Eigen::MatrixXcd& ybus, const Eigen::VectorXcd& v,
                            const InjectionSet& injections, PowerFlowResult& result) {
    const int n_branches = static_cast<int>(grid.branches.size());
    result.s_from_mva.resize(n_branches);
    result.s_to_mva.resize(n_branches);
    result.loading_percent.resize(n_branches);

    double losses_pu = 0.0;
    for (int b = 0; b < n_branches; ++b) {
        const auto& br = grid.branches[b];
        const int i = index.of_bus(br.from_bus);
        const int j = index.of_bus(br.to_bus);
        const std::complex<double> y_series = 1.0 / std::complex<double>(br.r_pu, br.x_pu);
        const std::complex<double> y_shunt(0.0, br.b_shunt_pu / 2.0);
        const std::complex<double> i_from = (v[i] - v[j]) * y_series + v[i] * y_shunt;
        const std::complex<double> i_to = (v[j] - v[i]) * y_series + v[j] * y_shunt;
        const std::complex<double> s_from = v[i] * std::conj(i_from);
        const std::complex<double> s_to = v[j] * std::conj(i_to);
        result.s_from_mva[b] = s_from * grid.base_mva;
        result.s_to_mva[b] = s_to * grid.base_mva;
        result.loading_percent[b] =
            100.0 * std::max(std::abs(s_from), std::abs(s_to)) * grid.base_mva / br.rating_mva;
        losses_pu += s_from.real() + s_to.real();
    }
    result.total_losses_mw = losses_pu * grid.base_mva;

    // The slack absorbs whatever the fixed injections at its bus do not cover.
    const int slack = index.slack_index();
    std::complex<double> current(0.0, 0.0);
    for (int k = 0; k < v.size(); ++k) current += ybus(slack, k) * v[k];
    const std::complex<double> s_slack = v[slack] * std::conj(current);
    result.ext_p_mw = s_slack.real() * grid.base_mva - injections.p_mw[slack];
    result.ext_q_mvar = s_slack.imag() * grid.base_mva - injections.q_mvar[slack];
}

}  // namespace

PowerFlowResult solve_power_flow(const GridModel& grid, const InjectionSet& injections,
                                 const SolverSettings& settings) {
    const GridIndex index(grid);
    const int n = static_cast<int>(grid.buses.size());
    const int slack = index.slack_index();
    const Eigen::MatrixXcd ybus = build_admittance_matrix(grid);
    const Eigen::MatrixXd g = ybus.real();
    const Eigen::MatrixXd b = ybus.imag();

    // Scheduled injections in per-unit.
    const Eigen::VectorXd p_sched = injections.p_mw / grid.base_mva;
    const Eigen::VectorXd q_sched = injections.q_mvar / grid.base_mva;

    PowerFlowResult result;
    result.v_mag_pu = Eigen::VectorXd::Ones(n);
    result.v_ang_rad = Eigen::VectorXd::Zero(n);

    std::vector<int> pq;  // all non-slack buses
    pq.reserve(n - 1);
    for (int i = 0; i < n; ++i) {
        if (i != slack) pq.push_back(i);
    }
    const int m = static_cast<int>(pq.size());

    Eigen::VectorXd& vm = result.v_mag_pu;
    Eigen::VectorXd& va = result.v_ang_rad;

    auto calc_power = [&](Eigen::VectorXd& p_calc, Eigen::VectorXd& q_calc) {
        p_calc.setZero(n);
        q_calc.setZero(n);
        for (int i = 0; i < n; ++i) {
            double pi = 0.0, qi = 0.0;
            for (int k = 0; k < n; ++k) {
                const double angle = va[i] - va[k];
                const double c = std::cos(angle);
                const double s = std::sin(angle);
                pi += vm[i] * vm[k] * (g(i, k) * c + b(i, k) * s);
                qi += vm[i] * vm[k] * (g(i, k) * s - b(i, k) * c);
            }
            p_calc[i] = pi;
            q_calc[i] = qi;
        }
    };

    Eigen::VectorXd p_calc(n), q_calc(n);
    for (int iter = 0; iter <= settings.max_iterations; ++iter) {
        calc_power(p_calc, q_calc);

        Eigen::VectorXd mismatch(2 * m);
        for (int r = 0; r < m; ++r) {
            mismatch[r] = p_sched[pq[r]] - p_calc[pq[r]];
            mismatch[m + r] = q_sched[pq[r]] - q_calc[pq[r]];
        }
        const double max_mismatch = m == 0 ? 0.0 : mismatch.cwiseAbs().maxCoeff();
        result.max_mismatch_pu = max_mismatch;
        result.iterations = iter;

        if (!std::isfinite(max_mismatch)) {
            result.converged = false;
            break;
        }
        if (max_mismatch <= settings.tolerance_pu) {
            result.converged = true;
            break;
        }
        if (iter == settings.max_iterations) {
            result.converged = false;
            break;
        }

        // Jacobian blocks: [dP/dth dP/dV; dQ/dth dQ/dV] over non-slack buses.
        Eigen::MatrixXd jac(2 * m, 2 * m);
        for (int r = 0; r < m; ++r) {
            const int i = pq[r];
            for (int c = 0; c < m; ++c) {
                const int k = pq[c];
                if (i == k) {
                    jac(r, c) = -q_calc[i] - b(i, i) * vm[i] * vm[i];
                    jac(r, m + c) = p_calc[i] / vm[i] + g(i, i) * vm[i];
                    jac(m + r, c) = p_calc[i] - g(i, i) * vm[i] * vm[i];
                    jac(m + r, m + c) = q_calc[i] / vm[i] - b(i, i) * vm[i];
                } else {
                    const double angle = va[i] - va[k];
                    const double cs = std::cos(angle);
                    const double sn = std::sin(angle);
                    const double common_p = vm[i] * vm[k] * (g(i, k) * sn - b(i, k) * cs);
                    const double common_q = vm[i] * vm[k] * (g(i, k) * cs + b(i, k) * sn);
                    jac(r, c) = common_p;
                    jac(r, m + c) = vm[i] * (g(i, k) * cs + b(i, k) * sn);
                    jac(m + r, c) = -common_q;
                    jac(m + r, m + c) = vm[i] * (g(i, k) * sn - b(i, k) * cs);
                }
            }
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const Eigen::MatrixXd& lu_matrix = lu.matrixLU();
        double min_pivot = std::numeric_limits<double>::infinity();
        double max_pivot = 0.0;
        for (int d = 0; d < lu_matrix.rows(); ++d) {
            min_pivot = std::min(min_pivot, std::abs(lu_matrix(d, d)));
            max_pivot = std::max(max_pivot, std::abs(lu_matrix(d, d)));
        }
        if (!(min_pivot > max_pivot * 1e-14)) {
            // Singular at the flat start means the network itself is defective.
            // Later on it is a symptom of a diverging iterate, which is data.
            if (iter == 0) {
                throw NumericalError("power flow Jacobian is singular at the initial iterate");
            }
            result.converged = false;
            break;
        }

        const Eigen::VectorXd dx = lu.solve(mismatch);
        if (!dx.allFinite()) {
            result.converged = false;
            break;
        }
        for (int r = 0; r < m; ++r) {
            va[pq[r]] += dx[r];
            vm[pq[r]] += dx[m + r];
        }
    }

    const Eigen::VectorXcd v = bus_voltages(vm, va);
    if (v.allFinite()) {
        fill_result_quantities(grid, index, ybus, v, injections, result);
    } else {
        // Keep the result shape intact even when the iterate blew up.
        result.s_from_mva.assign(grid.branches.size(), {0.0, 0.0});
        result.s_to_mva.assign(grid.branches.size(), {0.0, 0.0});
        result.loading_percent = Eigen::VectorXd::Zero(static_cast<int>(grid.branches.size()));
    }
    return result;
}

double branch_loading(const PowerFlowResult& result, const GridModel& grid, int branch_index) {
    if (!result.converged) throw NotConverged("branch_loading requires a converged power flow");
    const auto& br = grid.branches.at(static_cast<std::size_t>(branch_index));
    return 100.0 *
           std::max(std::abs(result.s_from_mva[branch_index]), std::abs(result.s_to_mva[branch_index])) /
           br.rating_mva;
}

double total_losses(const PowerFlowResult& result) {
    if (!result.converged) throw NotConverged("total_losses requires a converged power flow");
    double losses = 0.0;
    for (std::size_t b = 0; b < result.s_from_mva.size(); ++b) {
        losses += result.s_from_mva[b].real() + result.s_to_mva[b].real();
    }
    return losses;
}

}  // namespace opfenv
