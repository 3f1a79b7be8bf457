#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "opfenv/env.hpp"
#include "opfenv/rng.hpp"

namespace opfenv {

enum class OutputActivation { identity, tanh };

/// Fully connected network, rectifier hidden units, configurable output
/// activation. Batches are stored one sample per column.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<int> layer_sizes, OutputActivation output, RngStream& init_rng);

    struct Cache {
        Eigen::MatrixXd input;
        std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
        std::vector<Eigen::MatrixXd> post;  // activation per layer
    };

    struct Grads {
        std::vector<Eigen::MatrixXd> w;
        std::vector<Eigen::VectorXd> b;
    };

    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
    Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Cache& cache) const;

    /// Reverse-mode pass from dLoss/dOutput; returns dLoss/dInput and fills
    /// parameter gradients (averaged over nothing - caller owns scaling).
    Eigen::MatrixXd backward(const Eigen::MatrixXd& d_output, const Cache& cache,
                             Grads& grads) const;

    Grads zero_grads() const;
    void soft_update_from(const Mlp& online, double tau);
    bool finite() const;
    double max_abs_parameter() const;

    int input_size() const { return layer_sizes_.front(); }
    int output_size() const { return layer_sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return layer_sizes_; }

    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    OutputActivation output_activation = OutputActivation::identity;

private:
    std::vector<int> layer_sizes_;
};

/// Adam with beta1=0.9, beta2=0.999, eps=1e-8 and bias correction.
class Adam {
public:
    Adam() = default;
    explicit Adam(const Mlp& net);
    void step(Mlp& net, const Mlp::Grads& grads, double lr);

private:
    std::vector<Eigen::MatrixXd> m_w_, v_w_;
    std::vector<Eigen::VectorXd> m_b_, v_b_;
    std::int64_t t_ = 0;
};

struct Transition {
    Eigen::VectorXd observation;
    Eigen::VectorXd action;
    double reward = 0.0;
    Eigen::VectorXd next_observation;
    bool terminal = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(Transition transition);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& sample(RngStream& rng) const;

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> data_;
};

struct DdpgConfig {
    std::size_t memory_size = 1'000'000;
    int batch_size = 1024;
    double actor_lr = 1e-4;
    double critic_lr = 5e-4;
    std::vector<int> hidden{256, 256, 256};
    double noise_std = 0.1;
    double gamma = 0.0;
    double tau = 0.005;
    int updates_per_step = 1;
    int warmup_steps = 1000;
    int total_steps = 50'000;
    int eval_interval = 1000;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

/// Deterministic policy: actor network plus the affine map from tanh output
/// to the environment's action box.
struct Policy {
    Mlp actor;
    ActionBox box;

    Eigen::VectorXd act(const Eigen::VectorXd& observation) const;
};

/// Actor output with exploration noise, clipped to the box. noise_std = 0
/// gives the raw deterministic action.
Eigen::VectorXd policy_act(const Policy& policy, const Eigen::VectorXd& observation,
                           double noise_std, RngStream& rng);

struct TrainCheckpoint {
    int step = 0;
    double mape_percent = std::numeric_limits<double>::quiet_NaN();
    double invalid_share_percent = std::numeric_limits<double>::quiet_NaN();
    double mean_reward = 0.0;
    double wall_clock_s = 0.0;
};

struct TrainLog {
    std::vector<TrainCheckpoint> checkpoints;
};

/// Optional metric hook run at every checkpoint (the experiment harness uses
/// it to score the policy on the held-out split).
struct EvalSnapshot {
    double mape_percent = std::numeric_limits<double>::quiet_NaN();
    double invalid_share_percent = std::numeric_limits<double>::quiet_NaN();
};
using EvalCallback = std::function<EvalSnapshot(const Policy&, int step)>;

struct TrainResult {
    Policy policy;
    TrainLog log;
};

/// One-update-per-step DDPG. Throws DivergenceDetected when any parameter
/// turns non-finite. Deterministic under a fixed seed.
TrainResult ddpg_train(Environment& env, const DdpgConfig& config,
                       const EvalCallback& eval = nullptr);

/// Versioned binary checkpoint; round-trips parameters bit-exactly.
void save_policy(const Policy& policy, const std::string& path);
Policy load_policy(const std::string& path);

}  // namespace opfenv
