#include "opfenv/env.hpp"

#include <algorithm>
#include <cmath>

namespace opfenv {

void DesignConfig::validate() const {
    if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
    if (episode_mode == EpisodeMode::n_step && obs_mode != ObsMode::redundant) {
        throw ConfigError("n_step episodes require the redundant observation space");
    }
    if (!(normal_sigma_rel >= 0.0)) throw ConfigError("normal_sigma_rel must be >= 0");
    if (penalty_factors) {
        const PenaltyFactors& alphas = *penalty_factors;
        for (ConstraintKind kind :
             {ConstraintKind::voltage_band, ConstraintKind::line_loading,
              ConstraintKind::external_exchange, ConstraintKind::actuator_capability,
              ConstraintKind::non_convergence}) {
            if (alphas.of(kind) < 0.0) throw ConfigError("penalty factors must be >= 0");
        }
    }
}

ExogenousState state_from_row(const Dataset& dataset, const StateColumns& columns,
                              std::int64_t row) {
    ExogenousState state;
    auto gather = [&](const std::vector<int>& cols) {
        Eigen::VectorXd values(static_cast<int>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) {
            values[static_cast<int>(i)] = dataset.at(row, cols[i]);
        }
        return values;
    };
    state.load_p_mw = gather(columns.load_p);
    state.load_q_mvar = gather(columns.load_q);
    state.gen_p_mw = gather(columns.gen_p);
    state.gen_price = gather(columns.price);
    state.row_id = row;
    return state;
}

ExogenousState sample_time_series(const Dataset& dataset, const StateColumns& columns,
                                  RngStream& rng) {
    if (dataset.n_train() <= 0) throw EmptyDataset("no training rows to sample from");
    const auto row = static_cast<std::int64_t>(
        rng.uniform_index(static_cast<std::uint64_t>(dataset.n_train())));
    return state_from_row(dataset, columns, row);
}

namespace {

ExogenousState sample_random(const Dataset& dataset, const StateColumns& columns, RngStream& rng,
                             bool normal, double sigma_rel) {
    auto draw = [&](int col) {
        const ColumnStats stats = dataset.stats_full(col);
        if (stats.min > stats.max) {
            throw SamplerRangeError("degenerate sampling range for a dataset column");
        }
        if (!normal) return rng.uniform(stats.min, stats.max);
        const double sigma = sigma_rel * (stats.max - stats.min);
        return std::clamp(rng.normal(stats.mean, sigma), stats.min, stats.max);
    };
    ExogenousState state;
    auto gather = [&](const std::vector<int>& cols) {
        Eigen::VectorXd values(static_cast<int>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) values[static_cast<int>(i)] = draw(cols[i]);
        return values;
    };
    state.load_p_mw = gather(columns.load_p);
    state.load_q_mvar = gather(columns.load_q);
    state.gen_p_mw = gather(columns.gen_p);
    state.gen_price = gather(columns.price);
    state.row_id = -1;
    return state;
}

}  // namespace

ExogenousState sample_uniform(const Dataset& dataset, const StateColumns& columns,
                              RngStream& rng) {
    return sample_random(dataset, columns, rng, false, 0.0);
}

ExogenousState sample_normal(const Dataset& dataset, const StateColumns& columns,
                             double sigma_rel, RngStream& rng) {
    return sample_random(dataset, columns, rng, true, sigma_rel);
}

Eigen::VectorXd initial_action(const ActionBox& box, InitActionMode mode, RngStream& rng) {
    if (mode == InitActionMode::fixed) return box.midpoint();
    Eigen::VectorXd action(box.dims());
    for (int i = 0; i < box.dims(); ++i) action[i] = rng.uniform(box.lo[i], box.hi[i]);
    return action;
}

double reward_summation(double objective, double penalty) { return -objective - penalty; }

double reward_replacement(double objective, double penalty, bool valid, double offset_k) {
    return valid ? -objective + offset_k : -penalty;
}

Eigen::VectorXd scale_observation(const Eigen::VectorXd& raw, const ObservationLayout& layout) {
    if (raw.size() != layout.size()) {
        throw ShapeMismatch("observation has " + std::to_string(raw.size()) +
                            " entries, layout expects " + std::to_string(layout.size()));
    }
    Eigen::VectorXd scaled(raw.size());
    for (int i = 0; i < raw.size(); ++i) {
        const SlotInfo& slot = layout.slots[static_cast<std::size_t>(i)];
        if (slot.hi <= slot.lo || !std::isfinite(raw[i])) {
            scaled[i] = 0.0;
            continue;
        }
        const double unit = (raw[i] - slot.lo) / (slot.hi - slot.lo);
        scaled[i] = std::clamp(-1.0 + 2.0 * unit, -1.0, 1.0);
    }
    return scaled;
}

namespace {

StateColumns resolve_columns(const Dataset& dataset, const OpfProblem& problem) {
    StateColumns columns;
    const std::size_t n_loads = problem.grid.loads.size();
    const std::size_t n_gens = problem.grid.generators.size();
    for (std::size_t l = 0; l < n_loads; ++l) {
        columns.load_p.push_back(dataset.column_index("load" + std::to_string(l) + ":p_mw"));
        columns.load_q.push_back(dataset.column_index("load" + std::to_string(l) + ":q_mvar"));
    }
    const bool voltage_control = problem.kind == ObjectiveKind::voltage_control;
    const std::string price_quantity = voltage_control ? "price_reactive" : "price_active";
    for (std::size_t g = 0; g < n_gens; ++g) {
        if (voltage_control) {
            columns.gen_p.push_back(dataset.column_index("gen" + std::to_string(g) + ":p_mw"));
        }
        columns.price.push_back(
            dataset.column_index("gen" + std::to_string(g) + ":" + price_quantity));
    }
    return columns;
}

}  // namespace

Environment::Environment(OpfProblem problem, Dataset dataset, DesignConfig design)
    : problem_(std::move(problem)), dataset_(std::move(dataset)), design_(design) {
    design_.validate();
    box_ = action_box(problem_);
    columns_ = resolve_columns(dataset_, problem_);
    layout_ = build_layout();
}

ObservationLayout Environment::build_layout() const {
    ObservationLayout layout;
    auto add = [&](const std::string& name, double lo, double hi) {
        layout.slots.push_back({name, lo, hi});
    };
    auto add_train_scaled = [&](const std::string& name, int col) {
        const ColumnStats stats = dataset_.stats_train(col);
        add(name, stats.min, stats.max);
    };

    const auto& cols = columns_;
    for (std::size_t l = 0; l < cols.load_p.size(); ++l) {
        add_train_scaled("load" + std::to_string(l) + ":p_mw", cols.load_p[l]);
        add_train_scaled("load" + std::to_string(l) + ":q_mvar", cols.load_q[l]);
    }
    for (std::size_t g = 0; g < cols.price.size(); ++g) {
        add_train_scaled("gen" + std::to_string(g) + ":price", cols.price[g]);
    }
    for (std::size_t g = 0; g < cols.gen_p.size(); ++g) {
        add_train_scaled("gen" + std::to_string(g) + ":p_mw", cols.gen_p[g]);
    }

    if (design_.obs_mode == ObsMode::redundant) {
        const GridModel& grid = problem_.grid;
        for (std::size_t b = 0; b < grid.buses.size(); ++b) {
            const double band = grid.buses[b].v_max_pu - grid.buses[b].v_min_pu;
            add("bus" + std::to_string(grid.buses[b].id) + ":v_pu",
                grid.buses[b].v_min_pu - 0.5 * band, grid.buses[b].v_max_pu + 0.5 * band);
        }
        for (std::size_t br = 0; br < grid.branches.size(); ++br) {
            add("branch" + std::to_string(br) + ":loading", 0.0, 200.0);
        }
        add("ext:p_mw", -grid.base_mva, grid.base_mva);
        add("ext:q_mvar", -grid.base_mva, grid.base_mva);
        if (design_.init_action_mode == InitActionMode::random) {
            for (int a = 0; a < box_.dims(); ++a) {
                add("action" + std::to_string(a), box_.lo[a], box_.hi[a]);
            }
        }
    }
    return layout;
}

Observation Environment::observe(const ExogenousState& state, const PowerFlowResult* result,
                                 const Eigen::VectorXd* action) const {
    Eigen::VectorXd raw(layout_.size());
    int i = 0;
    for (int l = 0; l < state.load_p_mw.size(); ++l) {
        raw[i++] = state.load_p_mw[l];
        raw[i++] = state.load_q_mvar[l];
    }
    for (int g = 0; g < state.gen_price.size(); ++g) raw[i++] = state.gen_price[g];
    for (int g = 0; g < state.gen_p_mw.size(); ++g) raw[i++] = state.gen_p_mw[g];

    if (design_.obs_mode == ObsMode::redundant) {
        for (int b = 0; b < result->v_mag_pu.size(); ++b) raw[i++] = result->v_mag_pu[b];
        for (int br = 0; br < result->loading_percent.size(); ++br) {
            raw[i++] = result->loading_percent[br];
        }
        raw[i++] = result->ext_p_mw;
        raw[i++] = result->ext_q_mvar;
        if (design_.init_action_mode == InitActionMode::random) {
            for (int a = 0; a < action->size(); ++a) raw[i++] = (*action)[a];
        }
    }
    return {scale_observation(raw, layout_)};
}

ExogenousState Environment::sample_state(RngStream& rng) const {
    switch (design_.data_source) {
        case DataSource::time_series: return sample_time_series(dataset_, columns_, rng);
        case DataSource::uniform: return sample_uniform(dataset_, columns_, rng);
        case DataSource::normal:
            return sample_normal(dataset_, columns_, design_.normal_sigma_rel, rng);
    }
    throw ConfigError("unknown data source");
}

Observation Environment::reset(RngStream& rng) { return reset_with_state(sample_state(rng), rng); }

Observation Environment::reset_to_row(std::int64_t row, RngStream& rng) {
    return reset_with_state(state_from_row(dataset_, columns_, row), rng);
}

Observation Environment::reset_with_state(ExogenousState state, RngStream& rng) {
    state_ = std::move(state);
    step_index_ = 0;
    ready_ = true;
    have_result_ = false;

    if (design_.obs_mode == ObsMode::markov) {
        return observe(state_, nullptr, nullptr);
    }
    // Redundant observations require the system variables of an initial
    // power flow with some starting actuator setpoints in place.
    last_action_ = initial_action(box_, design_.init_action_mode, rng);
    const ActionEvaluation ev = evaluate_action(
        problem_, state_,
        std::span<const double>(last_action_.data(), static_cast<std::size_t>(last_action_.size())));
    ++pf_calls_;
    last_result_ = ev.result;
    have_result_ = true;
    return observe(state_, &last_result_, &last_action_);
}

StepOutcome Environment::step(std::span<const double> action) {
    if (!ready_) throw std::logic_error("step() called before reset()");
    if (static_cast<int>(action.size()) != box_.dims()) {
        throw ShapeMismatch("action has " + std::to_string(action.size()) + " entries, expected " +
                            std::to_string(box_.dims()));
    }

    Eigen::VectorXd requested(box_.dims());
    for (int i = 0; i < box_.dims(); ++i) requested[i] = action[i];
    const Eigen::VectorXd clipped = box_.clip(requested);
    const bool was_clipped = (clipped - requested).cwiseAbs().maxCoeff() > 0.0;

    const ActionEvaluation ev = evaluate_action(
        problem_, state_,
        std::span<const double>(clipped.data(), static_cast<std::size_t>(clipped.size())));
    ++pf_calls_;
    last_result_ = ev.result;
    last_action_ = clipped;
    have_result_ = true;

    StepOutcome out;
    out.info.objective = ev.objective;
    out.info.penalty = ev.penalty;
    out.info.report = ev.report;
    out.info.pf_converged = ev.result.converged;
    out.info.action_clipped = was_clipped;
    out.info.setpoints = ev.setpoints;

    if (design_.reward_mode == RewardMode::summation) {
        out.reward = reward_summation(ev.objective, ev.penalty);
    } else {
        if (std::isnan(design_.offset_k)) {
            throw ConfigError("replacement reward requires a calibrated offset_k");
        }
        out.reward = reward_replacement(ev.objective, ev.penalty, ev.report.valid, design_.offset_k);
    }

    ++step_index_;
    out.terminal = step_index_ >= design_.episode_length();
    if (out.terminal) ready_ = false;

    out.observation = design_.obs_mode == ObsMode::markov
                          ? observe(state_, nullptr, nullptr)
                          : observe(state_, &last_result_, &last_action_);
    return out;
}

double offset_from_samples(std::span<const double> objectives, OffsetMode mode) {
    if (objectives.empty()) throw ConfigError("offset calibration needs at least one sample");
    if (mode == OffsetMode::min) {
        return *std::max_element(objectives.begin(), objectives.end());
    }
    double sum = 0.0;
    for (double j : objectives) sum += j;
    return sum / static_cast<double>(objectives.size());
}

CalibrationResult calibrate_offset(Environment& env, OffsetMode mode, RngStream& rng, int n) {
    CalibrationResult calibration;
    calibration.samples.reserve(static_cast<std::size_t>(n));
    std::vector<double> objectives;
    objectives.reserve(static_cast<std::size_t>(n));

    // The env may be configured for replacement rewards with offset_k still
    // unset; sample through the physics only, not through step().
    for (int i = 0; i < n; ++i) {
        const ExogenousState state = env.sample_state(rng);
        const Eigen::VectorXd action = initial_action(env.box(), InitActionMode::random, rng);
        const ActionEvaluation ev = evaluate_action(
            env.problem(), state,
            std::span<const double>(action.data(), static_cast<std::size_t>(action.size())));
        calibration.samples.push_back({ev.objective, ev.penalty, ev.report.valid});
        objectives.push_back(ev.objective);
    }
    calibration.k = offset_from_samples(objectives, mode);
    return calibration;
}

}  // namespace opfenv
