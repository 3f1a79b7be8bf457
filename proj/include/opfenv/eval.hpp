#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opfenv/ddpg.hpp"
#include "opfenv/env.hpp"
#include "opfenv/scenario.hpp"

namespace opfenv {

struct DegenerateOracle : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OracleMissing : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SampleRecord {
    std::int64_t state_id = -1;
    double agent_objective = 0.0;
    double oracle_objective = 0.0;
    bool agent_valid = false;
    bool oracle_valid = false;
    double violation_total = 0.0;
};

struct EvaluationReport {
    int n = 0;
    int n_valid = 0;  // agent-valid samples
    std::optional<double> mape_percent;  // undefined when no scorable sample exists
    double invalid_share_percent = 0.0;
    std::vector<SampleRecord> samples;
};

/// MAPE over samples that are agent-valid and have a valid oracle optimum.
/// Returns nullopt when no such sample exists. Throws DegenerateOracle when
/// a scorable sample has J* <= 1e-9.
std::optional<double> compute_mape(const std::vector<SampleRecord>& samples);

/// (1 - n_valid / n) * 100
double compute_invalid_share(int n_valid, int n);

/// Stable content hash of a grid document, used to key oracle cache files.
std::uint64_t grid_hash(const GridModel& grid);

/// Disk-backed map of reference optima keyed by dataset row. One JSON file
/// per (scenario tag, grid hash); writes are atomic.
class OracleCache {
public:
    OracleCache(std::string directory, std::string scenario_tag, std::uint64_t grid_hash_value);

    std::optional<OracleSolution> find(std::int64_t state_id) const;
    void put(std::int64_t state_id, const OracleSolution& solution);
    std::size_t size() const { return entries_.size(); }
    const std::string& file_path() const { return file_path_; }
    void save() const;

    /// Compute (or load) reference optima for the given rows.
    void ensure(const OpfProblem& problem, const Dataset& dataset, const StateColumns& columns,
                const std::vector<std::int64_t>& rows, const OracleOptions& base_options = {});

private:
    void load();

    std::string file_path_;
    std::map<std::int64_t, OracleSolution> entries_;
};

/// Deterministic, evenly spaced rows of the test split; identical for every
/// variant of a plan.
std::vector<std::int64_t> evaluation_rows(const Dataset& dataset, int max_samples);

/// Run the policy noise-free over the given test rows; n-step episodes score
/// the final state. Throws OracleMissing when a row has no cached optimum.
EvaluationReport evaluate_policy(const Policy& policy, Environment& env,
                                 const std::vector<std::int64_t>& rows, const OracleCache& oracle,
                                 std::uint64_t eval_seed = 0);

struct ExperimentVariant {
    std::string id;
    DesignConfig design;
};

struct ExperimentPlan {
    GridModel grid;
    ScenarioSpec scenario;
    Dataset dataset;
    std::vector<ExperimentVariant> variants;
    std::vector<std::uint64_t> seeds;
    DdpgConfig ddpg;
    int eval_samples = 500;
    OracleOptions oracle;
    std::string out_dir;
    std::string cache_dir;
    bool deterministic = false;
    int jobs = 1;
};

struct RunResult {
    std::string variant;
    std::uint64_t seed = 0;
    int steps = 0;
    bool diverged = false;
    double wall_clock_s = 0.0;
    double offset_k = std::numeric_limits<double>::quiet_NaN();
    EvaluationReport report;
    TrainLog log;
};

/// Train and evaluate every (variant, seed) pair on the shared test rows.
/// Existing result files are loaded instead of recomputed, so interrupted
/// sweeps resume. A diverged run is flagged and does not abort the plan.
std::vector<RunResult> run_experiment(const ExperimentPlan& plan);

/// results.csv plus nothing else; detail documents are written per run.
void export_results(const std::vector<RunResult>& results, const std::string& path);

std::string run_result_to_json(const RunResult& result);
RunResult run_result_from_json(const std::string& text);

struct ScatterResult {
    std::vector<std::pair<double, double>> points;  // (normalized J, total violation)
    std::optional<double> pearson_r;                // undefined for zero variance
    int skipped_non_converged = 0;
};

/// Random states x random actions; J batch min-max normalized; Pearson
/// correlation of normalized J against summed violations.
ScatterResult scatter_diagnostic(const Environment& env, int n_samples, RngStream& rng);

}  // namespace opfenv
