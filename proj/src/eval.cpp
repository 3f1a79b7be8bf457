#include "opfenv/eval.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace opfenv {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<double> compute_mape(const std::vector<SampleRecord>& samples) {
    constexpr double eps = 1e-9;
    double sum = 0.0;
    int n = 0;
    for (const auto& sample : samples) {
        if (!sample.agent_valid || !sample.oracle_valid) continue;
        if (sample.oracle_objective <= eps) {
            throw DegenerateOracle("oracle objective <= 1e-9 on state " +
                                   std::to_string(sample.state_id));
        }
        sum += std::abs(sample.agent_objective - sample.oracle_objective) / sample.oracle_objective;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n * 100.0;
}

double compute_invalid_share(int n_valid, int n) {
    if (n < 1 || n_valid < 0 || n_valid > n) {
        throw std::invalid_argument("invalid share needs 0 <= n_valid <= n, n >= 1");
    }
    return (1.0 - static_cast<double>(n_valid) / static_cast<double>(n)) * 100.0;
}

std::uint64_t grid_hash(const GridModel& grid) {
    const std::string text = save_grid_text(grid);
    std::uint64_t hash = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

namespace {

void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write file: " + tmp);
        out << content;
    }
    fs::rename(tmp, path);
}

json oracle_to_json(const OracleSolution& solution) {
    json j;
    j["valid"] = solution.valid;
    j["objective"] = solution.objective_value;
    j["evaluations"] = solution.evaluations;
    j["starts"] = solution.starts;
    j["action"] = std::vector<double>(solution.action.data(),
                                      solution.action.data() + solution.action.size());
    j["setpoints"] = std::vector<double>(solution.setpoints.data(),
                                         solution.setpoints.data() + solution.setpoints.size());
    return j;
}

OracleSolution oracle_from_json(const json& j) {
    OracleSolution solution;
    solution.valid = j.at("valid").get<bool>();
    solution.objective_value = j.at("objective").get<double>();
    solution.evaluations = j.at("evaluations").get<std::int64_t>();
    solution.starts = j.at("starts").get<int>();
    const auto action = j.at("action").get<std::vector<double>>();
    const auto setpoints = j.at("setpoints").get<std::vector<double>>();
    solution.action = Eigen::Map<const Eigen::VectorXd>(action.data(), action.size());
    solution.setpoints = Eigen::Map<const Eigen::VectorXd>(setpoints.data(), setpoints.size());
    return solution;
}

}  // namespace

OracleCache::OracleCache(std::string directory, std::string scenario_tag,
                         std::uint64_t grid_hash_value) {
    fs::create_directories(directory);
    char name[64];
    std::snprintf(name, sizeof(name), "oracle_%s_%016llx.json", scenario_tag.c_str(),
                  static_cast<unsigned long long>(grid_hash_value));
    file_path_ = (fs::path(directory) / name).string();
    load();
}

void OracleCache::load() {
    std::ifstream in(file_path_);
    if (!in) return;
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("oracle cache " + file_path_ + ": " + e.what());
    }
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        entries_[std::stoll(it.key())] = oracle_from_json(it.value());
    }
}

std::optional<OracleSolution> OracleCache::find(std::int64_t state_id) const {
    auto it = entries_.find(state_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void OracleCache::put(std::int64_t state_id, const OracleSolution& solution) {
    entries_[state_id] = solution;
}

void OracleCache::save() const {
    json doc = json::object();
    for (const auto& [id, solution] : entries_) {
        doc[std::to_string(id)] = oracle_to_json(solution);
    }
    write_atomic(file_path_, doc.dump(2) + "\n");
}

void OracleCache::ensure(const OpfProblem& problem, const Dataset& dataset,
                         const StateColumns& columns, const std::vector<std::int64_t>& rows,
                         const OracleOptions& base_options) {
    bool dirty = false;
    for (std::int64_t row : rows) {
        if (entries_.count(row)) continue;
        const ExogenousState state = state_from_row(dataset, columns, row);
        OracleOptions options = base_options;
        options.seed = static_cast<std::uint64_t>(row) * 0x9e3779b97f4a7c15ULL + 1;
        put(row, reference_optimum(problem, state, options));
        dirty = true;
    }
    if (dirty) save();
}

std::vector<std::int64_t> evaluation_rows(const Dataset& dataset, int max_samples) {
    const std::int64_t n_test = dataset.n_test();
    if (n_test <= 0) throw EmptyDataset("dataset has no test split");
    const std::int64_t n = std::min<std::int64_t>(max_samples, n_test);
    std::vector<std::int64_t> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        rows.push_back(dataset.split_boundary() + i * n_test / n);
    }
    return rows;
}

EvaluationReport evaluate_policy(const Policy& policy, Environment& env,
                                 const std::vector<std::int64_t>& rows, const OracleCache& oracle,
                                 std::uint64_t eval_seed) {
    EvaluationReport report;
    const int episode_length = env.design().episode_length();

    for (std::int64_t row : rows) {
        const auto cached = oracle.find(row);
        if (!cached) throw OracleMissing("no oracle solution for state " + std::to_string(row));

        RngStream row_rng(eval_seed, static_cast<std::uint64_t>(row) + 17);
        Observation obs = env.reset_to_row(row, row_rng);
        StepOutcome out;
        for (int t = 0; t < episode_length; ++t) {
            const Eigen::VectorXd action = policy.act(obs.values);
            out = env.step(std::span<const double>(action.data(),
                                                   static_cast<std::size_t>(action.size())));
            obs = out.observation;
        }

        SampleRecord record;
        record.state_id = row;
        record.agent_objective = out.info.objective;
        record.agent_valid = out.info.report.valid;
        record.violation_total = out.info.report.total_violation;
        record.oracle_objective = cached->objective_value;
        record.oracle_valid = cached->valid;
        report.samples.push_back(record);
    }

    report.n = static_cast<int>(report.samples.size());
    for (const auto& sample : report.samples) {
        if (sample.agent_valid) ++report.n_valid;
    }
    report.invalid_share_percent = compute_invalid_share(report.n_valid, report.n);
    report.mape_percent = compute_mape(report.samples);
    return report;
}

namespace {

json report_to_json(const EvaluationReport& report) {
    json j;
    j["n"] = report.n;
    j["n_valid"] = report.n_valid;
    if (report.mape_percent) {
        j["mape_percent"] = *report.mape_percent;
    } else {
        j["mape_percent"] = nullptr;
    }
    j["invalid_share_percent"] = report.invalid_share_percent;
    j["samples"] = json::array();
    for (const auto& sample : report.samples) {
        j["samples"].push_back({{"state_id", sample.state_id},
                                {"agent_objective", sample.agent_objective},
                                {"oracle_objective", sample.oracle_objective},
                                {"agent_valid", sample.agent_valid},
                                {"oracle_valid", sample.oracle_valid},
                                {"violation_total", sample.violation_total}});
    }
    return j;
}

EvaluationReport report_from_json(const json& j) {
    EvaluationReport report;
    report.n = j.at("n").get<int>();
    report.n_valid = j.at("n_valid").get<int>();
    if (!j.at("mape_percent").is_null()) report.mape_percent = j.at("mape_percent").get<double>();
    report.invalid_share_percent = j.at("invalid_share_percent").get<double>();
    for (const auto& s : j.at("samples")) {
        SampleRecord sample;
        sample.state_id = s.at("state_id").get<std::int64_t>();
        sample.agent_objective = s.at("agent_objective").get<double>();
        sample.oracle_objective = s.at("oracle_objective").get<double>();
        sample.agent_valid = s.at("agent_valid").get<bool>();
        sample.oracle_valid = s.at("oracle_valid").get<bool>();
        sample.violation_total = s.at("violation_total").get<double>();
        report.samples.push_back(sample);
    }
    return report;
}

double json_finite(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json finite_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

}  // namespace

std::string run_result_to_json(const RunResult& result) {
    json j;
    j["variant"] = result.variant;
    j["seed"] = result.seed;
    j["steps"] = result.steps;
    j["diverged"] = result.diverged;
    j["wall_clock_s"] = result.wall_clock_s;
    j["offset_k"] = finite_or_null(result.offset_k);
    j["report"] = report_to_json(result.report);
    j["train_log"] = json::array();
    for (const auto& cp : result.log.checkpoints) {
        j["train_log"].push_back({{"step", cp.step},
                                  {"mape_percent", finite_or_null(cp.mape_percent)},
                                  {"invalid_share_percent", finite_or_null(cp.invalid_share_percent)},
                                  {"mean_reward", cp.mean_reward},
                                  {"wall_clock_s", cp.wall_clock_s}});
    }
    return j.dump(2) + "\n";
}

RunResult run_result_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("run result: ") + e.what());
    }
    RunResult result;
    result.variant = j.at("variant").get<std::string>();
    result.seed = j.at("seed").get<std::uint64_t>();
    result.steps = j.at("steps").get<int>();
    result.diverged = j.at("diverged").get<bool>();
    result.wall_clock_s = j.at("wall_clock_s").get<double>();
    result.offset_k = json_finite(j.at("offset_k"));
    result.report = report_from_json(j.at("report"));
    for (const auto& cp : j.at("train_log")) {
        TrainCheckpoint checkpoint;
        checkpoint.step = cp.at("step").get<int>();
        checkpoint.mape_percent = json_finite(cp.at("mape_percent"));
        checkpoint.invalid_share_percent = json_finite(cp.at("invalid_share_percent"));
        checkpoint.mean_reward = cp.at("mean_reward").get<double>();
        checkpoint.wall_clock_s = cp.at("wall_clock_s").get<double>();
        result.log.checkpoints.push_back(checkpoint);
    }
    return result;
}

namespace {

std::string detail_file_name(const std::string& variant, std::uint64_t seed) {
    return variant + "__seed" + std::to_string(seed) + ".result";
}

RunResult execute_run(const ExperimentPlan& plan, const ExperimentVariant& variant,
                      std::uint64_t seed, const std::vector<std::int64_t>& rows,
                      const OracleCache& cache) {
    const auto t0 = std::chrono::steady_clock::now();
    RunResult result;
    result.variant = variant.id;
    result.seed = seed;
    result.steps = plan.ddpg.total_steps;

    DesignConfig design = variant.design;
    design.validate();

    Environment env = make_environment(plan.grid, plan.scenario, plan.dataset, design);
    if (design.reward_mode == RewardMode::replacement && std::isnan(design.offset_k)) {
        RngStream calib_rng(seed, 0xca11b8ULL);
        const CalibrationResult calibration = calibrate_offset(env, design.offset_mode, calib_rng);
        env.set_offset_k(calibration.k);
        result.offset_k = calibration.k;
    }

    DdpgConfig ddpg = plan.ddpg;
    ddpg.seed = seed;

    // Fresh environment per checkpoint evaluation keeps the training episode
    // state untouched.
    DesignConfig eval_design = design;
    eval_design.offset_k = env.offset_k();
    Environment eval_env = make_environment(plan.grid, plan.scenario, plan.dataset, eval_design);
    const EvalCallback eval_cb = [&](const Policy& policy, int) {
        const EvaluationReport report = evaluate_policy(policy, eval_env, rows, cache, seed);
        EvalSnapshot snapshot;
        snapshot.invalid_share_percent = report.invalid_share_percent;
        if (report.mape_percent) snapshot.mape_percent = *report.mape_percent;
        return snapshot;
    };

    try {
        TrainResult trained = ddpg_train(env, ddpg, eval_cb);
        result.log = std::move(trained.log);
        result.report = evaluate_policy(trained.policy, eval_env, rows, cache, seed);
    } catch (const DivergenceDetected&) {
        result.diverged = true;
        result.report = {};
    }

    result.wall_clock_s =
        plan.deterministic
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (plan.deterministic) {
        for (auto& cp : result.log.checkpoints) cp.wall_clock_s = 0.0;
    }
    return result;
}

}  // namespace

std::vector<RunResult> run_experiment(const ExperimentPlan& plan) {
    if (plan.variants.empty()) throw ConfigError("experiment plan has no variants");
    if (plan.seeds.empty()) throw ConfigError("experiment plan has no seeds");
    fs::create_directories(plan.out_dir);

    const std::vector<std::int64_t> rows = evaluation_rows(plan.dataset, plan.eval_samples);

    const OpfProblem problem = make_problem(plan.grid, plan.scenario);
    const std::string tag =
        plan.scenario.kind == ObjectiveKind::voltage_control ? "vc" : "ed";
    OracleCache cache(plan.cache_dir.empty() ? plan.out_dir : plan.cache_dir, tag,
                      grid_hash(plan.grid));
    {
        // Column resolution only; a throwaway environment gives it to us.
        Environment probe = make_environment(plan.grid, plan.scenario, plan.dataset,
                                             plan.variants.front().design);
        cache.ensure(problem, plan.dataset, probe.state_columns(), rows, plan.oracle);
    }

    struct Job {
        const ExperimentVariant* variant;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& variant : plan.variants) {
        for (std::uint64_t seed : plan.seeds) jobs.push_back({&variant, seed});
    }

    std::vector<RunResult> results(jobs.size());
    std::mutex io_mutex;
    std::size_t next = 0;

    auto worker = [&]() {
        while (true) {
            std::size_t index;
            {
                std::lock_guard<std::mutex> lock(io_mutex);
                if (next >= jobs.size()) return;
                index = next++;
            }
            const Job& job = jobs[index];
            const std::string path =
                (fs::path(plan.out_dir) / detail_file_name(job.variant->id, job.seed)).string();

            bool resumed = false;
            if (fs::exists(path)) {
                try {
                    std::ifstream in(path);
                    std::ostringstream buf;
                    buf << in.rdbuf();
                    results[index] = run_result_from_json(buf.str());
                    resumed = true;
                } catch (const ParseError&) {
                    resumed = false;  // recompute a corrupt file
                }
            }
            if (!resumed) {
                results[index] = execute_run(plan, *job.variant, job.seed, rows, cache);
                write_atomic(path, run_result_to_json(results[index]));
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(plan.jobs, static_cast<int>(jobs.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& thread : pool) thread.join();
    }
    return results;
}

void export_results(const std::vector<RunResult>& results, const std::string& path) {
    if (results.empty()) throw ConfigError("no results to export");
    fs::create_directories(fs::path(path).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(path).parent_path());
    std::ostringstream out;
    out << "variant,seed,mape_percent,invalid_share_percent,steps,wall_clock_s\n";
    char buf[64];
    auto fmt = [&](double v) {
        if (std::isnan(v)) return std::string("nan");
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& result : results) {
        const double mape = result.report.mape_percent
                                ? *result.report.mape_percent
                                : std::numeric_limits<double>::quiet_NaN();
        out << result.variant << ',' << result.seed << ',' << fmt(mape) << ','
            << fmt(result.report.invalid_share_percent) << ',' << result.steps << ','
            << fmt(result.wall_clock_s) << "\n";
    }
    write_atomic(path, out.str());
}

ScatterResult scatter_diagnostic(const Environment& env, int n_samples, RngStream& rng) {
    ScatterResult scatter;
    std::vector<double> objectives;
    std::vector<double> violations;
    objectives.reserve(static_cast<std::size_t>(n_samples));

    for (int i = 0; i < n_samples; ++i) {
        const ExogenousState state = env.sample_state(rng);
        const Eigen::VectorXd action = initial_action(env.box(), InitActionMode::random, rng);
        const ActionEvaluation ev = evaluate_action(
            env.problem(), state,
            std::span<const double>(action.data(), static_cast<std::size_t>(action.size())));
        if (!ev.result.converged) {
            ++scatter.skipped_non_converged;
            continue;
        }
        objectives.push_back(ev.objective);
        violations.push_back(ev.report.total_violation);
    }

    if (objectives.empty()) return scatter;
    const double j_min = *std::min_element(objectives.begin(), objectives.end());
    const double j_max = *std::max_element(objectives.begin(), objectives.end());
    const double j_range = j_max - j_min;
    for (std::size_t i = 0; i < objectives.size(); ++i) {
        const double norm = j_range > 0.0 ? (objectives[i] - j_min) / j_range : 0.0;
        scatter.points.emplace_back(norm, violations[i]);
    }

    const auto n = static_cast<double>(scatter.points.size());
    if (n < 2.0) return scatter;
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto& [x, y] : scatter.points) {
        mean_x += x;
        mean_y += y;
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& [x, y] : scatter.points) {
        sxx += (x - mean_x) * (x - mean_x);
        syy += (y - mean_y) * (y - mean_y);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if (sxx <= 0.0 || syy <= 0.0) return scatter;  // correlation undefined
    scatter.pearson_r = sxy / std::sqrt(sxx * syy);
    return scatter;
}

}  // namespace opfenv
