#pragma once

#include <complex>
#include <string>
#include <vector>

#include "opfenv/env.hpp"
#include "opfenv/opf.hpp"
#include "opfenv/powerflow.hpp"
#include "opfenv/scenario.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) {
    return std::string(OPFENV_DATA_DIR) + "/" + name;
}

/// Independent Gauss-Seidel power-flow oracle (fixed-point on the bus
/// voltage equations). Deliberately shares nothing with the Newton-Raphson
/// implementation path beyond the admittance matrix definition.
struct GaussSeidelResult {
    bool converged = false;
    Eigen::VectorXcd voltages;
    int iterations = 0;
};

inline GaussSeidelResult gauss_seidel(const opfenv::GridModel& grid,
                                      const opfenv::InjectionSet& injections,
                                      double tolerance = 1e-12, int max_iterations = 20000) {
    const opfenv::GridIndex index(grid);
    const int n = static_cast<int>(grid.buses.size());
    const int slack = index.slack_index();
    const Eigen::MatrixXcd ybus = opfenv::build_admittance_matrix(grid);

    Eigen::VectorXcd v = Eigen::VectorXcd::Ones(n);
    GaussSeidelResult out;
    for (int iter = 0; iter < max_iterations; ++iter) {
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
            if (i == slack) continue;
            const std::complex<double> s(injections.p_mw[i] / grid.base_mva,
                                         injections.q_mvar[i] / grid.base_mva);
            std::complex<double> sum(0.0, 0.0);
            for (int k = 0; k < n; ++k) {
                if (k != i) sum += ybus(i, k) * v[k];
            }
            const std::complex<double> v_new = (std::conj(s / v[i]) - sum) / ybus(i, i);
            delta = std::max(delta, std::abs(v_new - v[i]));
            v[i] = v_new;
        }
        out.iterations = iter + 1;
        if (delta < tolerance) {
            out.converged = true;
            break;
        }
    }
    out.voltages = v;
    return out;
}

/// Exhaustive grid search over the action box; the brute-force optimum the
/// pattern-search oracle is checked against.
struct GridSearchResult {
    bool valid = false;
    double objective = 0.0;
    Eigen::VectorXd action;
};

inline GridSearchResult dense_grid_search_1d(const opfenv::OpfProblem& problem,
                                             const opfenv::ExogenousState& state, int points) {
    const opfenv::ActionBox box = opfenv::action_box(problem);
    GridSearchResult best;
    for (int i = 0; i < points; ++i) {
        Eigen::VectorXd a(1);
        a[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / (points - 1);
        const auto ev = opfenv::evaluate_action(problem, state, {a.data(), 1});
        if (!ev.report.valid) continue;
        if (!best.valid || ev.objective < best.objective) {
            best = {true, ev.objective, a};
        }
    }
    return best;
}

inline GridSearchResult dense_grid_search_2d(const opfenv::OpfProblem& problem,
                                             const opfenv::ExogenousState& state, int points) {
    const opfenv::ActionBox box = opfenv::action_box(problem);
    GridSearchResult best;
    for (int i = 0; i < points; ++i) {
        for (int j = 0; j < points; ++j) {
            Eigen::VectorXd a(2);
            a[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / (points - 1);
            a[1] = box.lo[1] + (box.hi[1] - box.lo[1]) * j / (points - 1);
            const auto ev = opfenv::evaluate_action(problem, state, {a.data(), 2});
            if (!ev.report.valid) continue;
            if (!best.valid || ev.objective < best.objective) {
                best = {true, ev.objective, a};
            }
        }
    }
    return best;
}

/// Exogenous state for the 1-actuator voltage-control toy.
inline opfenv::ExogenousState toy_vc_state(double load_p = 1.0, double load_q = 0.5,
                                           double gen_p = 1.2, double price = 0.5) {
    opfenv::ExogenousState state;
    state.load_p_mw = Eigen::VectorXd::Constant(1, load_p);
    state.load_q_mvar = Eigen::VectorXd::Constant(1, load_q);
    state.gen_p_mw = Eigen::VectorXd::Constant(1, gen_p);
    state.gen_price = Eigen::VectorXd::Constant(1, price);
    return state;
}

/// Exogenous state for the 2-actuator eco-dispatch toy.
inline opfenv::ExogenousState toy_ed_state(double p1 = 1.2, double p2 = 0.8, double price1 = 40.0,
                                           double price2 = 70.0) {
    opfenv::ExogenousState state;
    state.load_p_mw = Eigen::VectorXd(2);
    state.load_p_mw << p1, p2;
    state.load_q_mvar = 0.3287 * state.load_p_mw;
    state.gen_p_mw = Eigen::VectorXd();
    state.gen_price = Eigen::VectorXd(2);
    state.gen_price << price1, price2;
    return state;
}

/// Small in-memory dataset for environment tests: deterministic rows, the
/// column set of the given problem kind.
inline opfenv::Dataset tiny_dataset(int n_loads, int n_gens, bool voltage_control,
                                    std::int64_t n_rows = 50, double load_scale = 1.0,
                                    std::uint64_t seed = 7) {
    std::vector<std::string> columns;
    for (int l = 0; l < n_loads; ++l) {
        columns.push_back("load" + std::to_string(l) + ":p_mw");
        columns.push_back("load" + std::to_string(l) + ":q_mvar");
    }
    if (voltage_control) {
        for (int g = 0; g < n_gens; ++g) columns.push_back("gen" + std::to_string(g) + ":p_mw");
    }
    const std::string price = voltage_control ? ":price_reactive" : ":price_active";
    for (int g = 0; g < n_gens; ++g) columns.push_back("gen" + std::to_string(g) + price);

    opfenv::RngStream rng(seed);
    Eigen::MatrixXd rows(n_rows, static_cast<int>(columns.size()));
    for (std::int64_t r = 0; r < n_rows; ++r) {
        int c = 0;
        for (int l = 0; l < n_loads; ++l) {
            const double p = load_scale * rng.uniform(0.2, 1.0);
            rows(r, c++) = p;
            rows(r, c++) = p * 0.3287;
        }
        if (voltage_control) {
            for (int g = 0; g < n_gens; ++g) rows(r, c++) = rng.uniform(0.0, 1.2);
        }
        for (int g = 0; g < n_gens; ++g) {
            rows(r, c++) = voltage_control ? rng.uniform(0.0, 1.0) : rng.uniform(20.0, 100.0);
        }
    }
    return split_dataset(opfenv::Dataset(std::move(columns), std::move(rows)), 0.2);
}

}  // namespace testutil
