#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opfenv/dataset.hpp"
#include "opfenv/opf.hpp"
#include "opfenv/rng.hpp"
#include "opfenv/state.hpp"

namespace opfenv {

struct SamplerRangeError : ConfigError {
    using ConfigError::ConfigError;
};

enum class DataSource { time_series, uniform, normal };
enum class ObsMode { markov, redundant };
enum class InitActionMode { fixed, random };
enum class EpisodeMode { one_step, n_step };
enum class RewardMode { summation, replacement };
enum class OffsetMode { min, mean };

/// The four design-decision axes plus their tunables.
struct DesignConfig {
    DataSource data_source = DataSource::time_series;
    ObsMode obs_mode = ObsMode::markov;
    InitActionMode init_action_mode = InitActionMode::fixed;  // redundant only
    EpisodeMode episode_mode = EpisodeMode::one_step;
    int n_steps = 5;  // n_step only; one_step runs exactly one step
    RewardMode reward_mode = RewardMode::summation;
    std::optional<PenaltyFactors> penalty_factors;  // scenario defaults when unset
    OffsetMode offset_mode = OffsetMode::min;       // replacement only
    double offset_k = std::numeric_limits<double>::quiet_NaN();  // set by calibration
    double normal_sigma_rel = 0.3;

    /// Throws ConfigError on invariant violations (e.g. n_step with markov
    /// observations). one_step forces the effective episode length to 1.
    void validate() const;
    int episode_length() const {
        return episode_mode == EpisodeMode::one_step ? 1 : n_steps;
    }
};

struct SlotInfo {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
};

struct ObservationLayout {
    std::vector<SlotInfo> slots;
    int size() const { return static_cast<int>(slots.size()); }
};

struct Observation {
    Eigen::VectorXd values;  // scaled to [-1, 1]
};

struct StepInfo {
    double objective = 0.0;  // 0 when the power flow failed
    double penalty = 0.0;
    ViolationReport report;
    bool pf_converged = false;
    bool action_clipped = false;
    Eigen::VectorXd setpoints;
};

struct StepOutcome {
    Observation observation;
    double reward = 0.0;
    bool terminal = false;
    StepInfo info;
};

/// Resolved dataset column indices for one scenario's exogenous state.
struct StateColumns {
    std::vector<int> load_p;
    std::vector<int> load_q;
    std::vector<int> gen_p;  // empty for economic dispatch
    std::vector<int> price;
};

ExogenousState state_from_row(const Dataset& dataset, const StateColumns& columns,
                              std::int64_t row);

/// Uniform draw of one training row; all values taken verbatim from that row.
ExogenousState sample_time_series(const Dataset& dataset, const StateColumns& columns,
                                  RngStream& rng);

/// Each variable independently uniform over its full-dataset [min, max].
ExogenousState sample_uniform(const Dataset& dataset, const StateColumns& columns,
                              RngStream& rng);

/// Normal(mean, (sigma_rel * range)^2) per variable, clipped to [min, max].
ExogenousState sample_normal(const Dataset& dataset, const StateColumns& columns,
                             double sigma_rel, RngStream& rng);

/// fixed -> box midpoint; random -> uniform draw inside the box.
Eigen::VectorXd initial_action(const ActionBox& box, InitActionMode mode, RngStream& rng);

/// R = -J - P
double reward_summation(double objective, double penalty);

/// R = -J + k when valid, -P otherwise.
double reward_replacement(double objective, double penalty, bool valid, double offset_k);

/// Per-slot min-max scaling to [-1, 1]; degenerate slots emit 0.
Eigen::VectorXd scale_observation(const Eigen::VectorXd& raw, const ObservationLayout& layout);

/// Gym-style one-agent environment around one OpfProblem and one dataset.
/// Instances are single-threaded; run independent copies in parallel.
class Environment {
public:
    Environment(OpfProblem problem, Dataset dataset, DesignConfig design);

    const OpfProblem& problem() const { return problem_; }
    const Dataset& dataset() const { return dataset_; }
    const DesignConfig& design() const { return design_; }
    const ActionBox& box() const { return box_; }
    const ObservationLayout& observation_layout() const { return layout_; }
    const StateColumns& state_columns() const { return columns_; }

    /// Samples a fresh exogenous state from the configured source (training
    /// split only) and builds the initial observation.
    Observation reset(RngStream& rng);
    /// Deterministic reset onto one dataset row (evaluation path).
    Observation reset_to_row(std::int64_t row, RngStream& rng);

    StepOutcome step(std::span<const double> action);

    ExogenousState sample_state(RngStream& rng) const;
    const ExogenousState& current_state() const { return state_; }
    int step_index() const { return step_index_; }
    long pf_calls() const { return pf_calls_; }

    double offset_k() const { return design_.offset_k; }
    void set_offset_k(double k) { design_.offset_k = k; }

private:
    Observation observe(const ExogenousState& state, const PowerFlowResult* result,
                        const Eigen::VectorXd* last_action) const;
    Observation reset_with_state(ExogenousState state, RngStream& rng);
    ObservationLayout build_layout() const;

    OpfProblem problem_;
    Dataset dataset_;
    DesignConfig design_;
    ActionBox box_;
    StateColumns columns_;
    ObservationLayout layout_;

    ExogenousState state_;
    int step_index_ = 0;
    bool ready_ = false;
    long pf_calls_ = 0;
    PowerFlowResult last_result_;
    Eigen::VectorXd last_action_;
    bool have_result_ = false;
};

struct CalibrationSample {
    double objective = 0.0;
    double penalty = 0.0;
    bool valid = false;
};

struct CalibrationResult {
    double k = 0.0;
    std::vector<CalibrationSample> samples;
};

/// Offset heuristic of the replacement reward: draw `n` random states with
/// uniform-random actions and take the max (mode=min) or mean (mode=mean) of
/// the observed objective values.
CalibrationResult calibrate_offset(Environment& env, OffsetMode mode, RngStream& rng,
                                   int n = 1000);

/// k from an already-observed objective sample (the calibration core).
double offset_from_samples(std::span<const double> objectives, OffsetMode mode);

}  // namespace opfenv
