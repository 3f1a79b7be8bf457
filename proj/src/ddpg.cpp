#include "opfenv/ddpg.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

namespace opfenv {

Mlp::Mlp(std::vector<int> layer_sizes, OutputActivation output, RngStream& init_rng)
    : output_activation(output), layer_sizes_(std::move(layer_sizes)) {
    if (layer_sizes_.size() < 2) throw ConfigError("Mlp needs at least input and output sizes");
    const std::size_t n_layers = layer_sizes_.size() - 1;
    weights.resize(n_layers);
    biases.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int fan_in = layer_sizes_[l];
        const int fan_out = layer_sizes_[l + 1];
        // Fan-in uniform init; the output layer starts near zero so that the
        // initial policy sits at the box midpoint and the initial value
        // estimates are small.
        const double bound = l + 1 == n_layers ? 3e-3 : 1.0 / std::sqrt(fan_in);
        weights[l].resize(fan_out, fan_in);
        biases[l].resize(fan_out);
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) weights[l](r, c) = init_rng.uniform(-bound, bound);
        }
        for (int r = 0; r < fan_out; ++r) biases[l][r] = init_rng.uniform(-bound, bound);
    }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
    Cache cache;
    return forward(Eigen::MatrixXd(input), cache).col(0);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, Cache& cache) const {
    if (input.rows() != input_size()) {
        throw ShapeMismatch("Mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                            std::to_string(input_size()));
    }
    cache.input = input;
    cache.pre.resize(weights.size());
    cache.post.resize(weights.size());
    Eigen::MatrixXd x = input;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Eigen::MatrixXd z = weights[l] * x;
        z.colwise() += biases[l];
        cache.pre[l] = z;
        if (l + 1 < weights.size()) {
            x = z.cwiseMax(0.0);  // rectifier
        } else if (output_activation == OutputActivation::tanh) {
            x = z.array().tanh().matrix();
        } else {
            x = z;
        }
        cache.post[l] = x;
    }
    return x;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& d_output, const Cache& cache,
                              Grads& grads) const {
    Eigen::MatrixXd delta = d_output;
    if (output_activation == OutputActivation::tanh) {
        const Eigen::MatrixXd& y = cache.post.back();
        delta = delta.cwiseProduct((1.0 - y.array().square()).matrix());
    }
    for (std::size_t l = weights.size(); l-- > 0;) {
        const Eigen::MatrixXd& layer_in = l == 0 ? cache.input : cache.post[l - 1];
        grads.w[l] = delta * layer_in.transpose();
        grads.b[l] = delta.rowwise().sum();
        if (l == 0) {
            return weights[0].transpose() * delta;
        }
        Eigen::MatrixXd d_prev = weights[l].transpose() * delta;
        // Rectifier gate of the previous layer.
        delta = d_prev.cwiseProduct(
            (cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return {};
}

Mlp::Grads Mlp::zero_grads() const {
    Grads grads;
    grads.w.resize(weights.size());
    grads.b.resize(biases.size());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        grads.w[l] = Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols());
        grads.b[l] = Eigen::VectorXd::Zero(biases[l].size());
    }
    return grads;
}

void Mlp::soft_update_from(const Mlp& online, double tau) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] = (1.0 - tau) * weights[l] + tau * online.weights[l];
        biases[l] = (1.0 - tau) * biases[l] + tau * online.biases[l];
    }
}

bool Mlp::finite() const {
    for (const auto& w : weights) {
        if (!w.allFinite()) return false;
    }
    for (const auto& b : biases) {
        if (!b.allFinite()) return false;
    }
    return true;
}

double Mlp::max_abs_parameter() const {
    double max_abs = 0.0;
    for (const auto& w : weights) max_abs = std::max(max_abs, w.cwiseAbs().maxCoeff());
    for (const auto& b : biases) {
        if (b.size()) max_abs = std::max(max_abs, b.cwiseAbs().maxCoeff());
    }
    return max_abs;
}

Adam::Adam(const Mlp& net) {
    m_w_.resize(net.weights.size());
    v_w_.resize(net.weights.size());
    m_b_.resize(net.biases.size());
    v_b_.resize(net.biases.size());
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        m_w_[l] = Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols());
        v_w_[l] = m_w_[l];
        m_b_[l] = Eigen::VectorXd::Zero(net.biases[l].size());
        v_b_[l] = m_b_[l];
    }
}

void Adam::step(Mlp& net, const Mlp::Grads& grads, double lr) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++t_;
    const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        m_w_[l] = beta1 * m_w_[l] + (1.0 - beta1) * grads.w[l];
        v_w_[l] = beta2 * v_w_[l].array().matrix() +
                  (1.0 - beta2) * grads.w[l].array().square().matrix();
        const Eigen::ArrayXXd m_hat = m_w_[l].array() / correction1;
        const Eigen::ArrayXXd v_hat = v_w_[l].array() / correction2;
        net.weights[l].array() -= lr * m_hat / (v_hat.sqrt() + eps);

        m_b_[l] = beta1 * m_b_[l] + (1.0 - beta1) * grads.b[l];
        v_b_[l] = beta2 * v_b_[l].array().matrix() +
                  (1.0 - beta2) * grads.b[l].array().square().matrix();
        const Eigen::ArrayXd mb_hat = m_b_[l].array() / correction1;
        const Eigen::ArrayXd vb_hat = v_b_[l].array() / correction2;
        net.biases[l].array() -= lr * mb_hat / (vb_hat.sqrt() + eps);
    }
}

void ReplayBuffer::push(Transition transition) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(transition));
        return;
    }
    data_[cursor_] = std::move(transition);
    cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::sample(RngStream& rng) const {
    if (data_.empty()) throw std::logic_error("sampling from an empty replay buffer");
    return data_[rng.uniform_index(data_.size())];
}

void DdpgConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (static_cast<std::size_t>(batch_size) > memory_size) {
        throw ConfigError("batch_size must not exceed memory_size");
    }
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
    if (updates_per_step < 1) throw ConfigError("updates_per_step must be >= 1");
    if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
    for (int width : hidden) {
        if (width < 1) throw ConfigError("hidden layer widths must be >= 1");
    }
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("learning rates must be > 0");
}

Eigen::VectorXd Policy::act(const Eigen::VectorXd& observation) const {
    const Eigen::VectorXd raw = actor.forward(observation);  // tanh output in (-1, 1)
    Eigen::VectorXd action(raw.size());
    for (int i = 0; i < raw.size(); ++i) {
        action[i] = box.lo[i] + 0.5 * (raw[i] + 1.0) * (box.hi[i] - box.lo[i]);
    }
    return action;
}

Eigen::VectorXd policy_act(const Policy& policy, const Eigen::VectorXd& observation,
                           double noise_std, RngStream& rng) {
    Eigen::VectorXd action = policy.act(observation);
    if (noise_std > 0.0) {
        for (int i = 0; i < action.size(); ++i) action[i] += rng.normal(0.0, noise_std);
    }
    return policy.box.clip(action);
}

namespace {

struct Batch {
    Eigen::MatrixXd obs;       // obs_dim x batch
    Eigen::MatrixXd action;    // act_dim x batch
    Eigen::VectorXd reward;    // batch
    Eigen::MatrixXd next_obs;  // obs_dim x batch
    Eigen::VectorXd not_terminal;
};

Batch assemble_batch(const ReplayBuffer& buffer, int batch_size, int obs_dim, int act_dim,
                     RngStream& rng) {
    Batch batch;
    batch.obs.resize(obs_dim, batch_size);
    batch.action.resize(act_dim, batch_size);
    batch.reward.resize(batch_size);
    batch.next_obs.resize(obs_dim, batch_size);
    batch.not_terminal.resize(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        const Transition& t = buffer.sample(rng);
        batch.obs.col(i) = t.observation;
        batch.action.col(i) = t.action;
        batch.reward[i] = t.reward;
        batch.next_obs.col(i) = t.next_observation;
        batch.not_terminal[i] = t.terminal ? 0.0 : 1.0;
    }
    return batch;
}

Eigen::MatrixXd to_box(const Eigen::MatrixXd& tanh_out, const ActionBox& box) {
    Eigen::MatrixXd actions(tanh_out.rows(), tanh_out.cols());
    for (int i = 0; i < tanh_out.rows(); ++i) {
        actions.row(i) =
            (box.lo[i] + 0.5 * (tanh_out.row(i).array() + 1.0) * (box.hi[i] - box.lo[i])).matrix();
    }
    return actions;
}

Eigen::MatrixXd concat_rows(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

}  // namespace

TrainResult ddpg_train(Environment& env, const DdpgConfig& config, const EvalCallback& eval) {
    config.validate();
    const int obs_dim = env.observation_layout().size();
    const int act_dim = env.box().dims();

    RngStream init_rng(config.seed, 1);
    RngStream env_rng(config.seed, 2);
    RngStream noise_rng(config.seed, 3);
    RngStream replay_rng(config.seed, 4);

    std::vector<int> actor_sizes{obs_dim};
    std::vector<int> critic_sizes{obs_dim + act_dim};
    for (int width : config.hidden) {
        actor_sizes.push_back(width);
        critic_sizes.push_back(width);
    }
    actor_sizes.push_back(act_dim);
    critic_sizes.push_back(1);

    Mlp actor(actor_sizes, OutputActivation::tanh, init_rng);
    Mlp critic(critic_sizes, OutputActivation::identity, init_rng);
    Mlp actor_target = actor;
    Mlp critic_target = critic;
    Adam actor_opt(actor);
    Adam critic_opt(critic);

    ReplayBuffer buffer(config.memory_size);
    Policy policy{actor, env.box()};

    TrainResult out;
    const auto t0 = std::chrono::steady_clock::now();
    double reward_window = 0.0;
    int reward_count = 0;

    Eigen::VectorXd obs = env.reset(env_rng).values;

    for (int step = 1; step <= config.total_steps; ++step) {
        Eigen::VectorXd action(act_dim);
        if (step <= config.warmup_steps) {
            for (int i = 0; i < act_dim; ++i) {
                action[i] = noise_rng.uniform(env.box().lo[i], env.box().hi[i]);
            }
        } else {
            policy.actor = actor;
            action = policy_act(policy, obs, config.noise_std, noise_rng);
        }

        const StepOutcome outcome =
            env.step(std::span<const double>(action.data(), static_cast<std::size_t>(act_dim)));
        buffer.push({obs, action, outcome.reward, outcome.observation.values, outcome.terminal});
        reward_window += outcome.reward;
        ++reward_count;

        obs = outcome.terminal ? env.reset(env_rng).values : outcome.observation.values;

        if (step > config.warmup_steps &&
            buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
          for (int update = 0; update < config.updates_per_step; ++update) {
            const Batch batch =
                assemble_batch(buffer, config.batch_size, obs_dim, act_dim, replay_rng);
            const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

            // Critic target y = r + gamma * (1 - terminal) * Q'(s', pi'(s')).
            Mlp::Cache tmp;
            const Eigen::MatrixXd next_actions =
                to_box(actor_target.forward(batch.next_obs, tmp), env.box());
            const Eigen::MatrixXd next_q =
                critic_target.forward(concat_rows(batch.next_obs, next_actions), tmp);
            Eigen::VectorXd y(config.batch_size);
            for (int i = 0; i < config.batch_size; ++i) {
                y[i] = batch.reward[i] + config.gamma * batch.not_terminal[i] * next_q(0, i);
            }

            // Critic regression on the Bellman target.
            Mlp::Cache critic_cache;
            const Eigen::MatrixXd q =
                critic.forward(concat_rows(batch.obs, batch.action), critic_cache);
            Eigen::MatrixXd d_q(1, config.batch_size);
            for (int i = 0; i < config.batch_size; ++i) {
                d_q(0, i) = 2.0 * (q(0, i) - y[i]) * inv_batch;
            }
            Mlp::Grads critic_grads = critic.zero_grads();
            critic.backward(d_q, critic_cache, critic_grads);
            critic_opt.step(critic, critic_grads, config.critic_lr);

            // Actor ascent on Q(s, pi(s)): gradient through the critic's
            // action inputs, then through the box map and the actor.
            Mlp::Cache actor_cache;
            const Eigen::MatrixXd tanh_out = actor.forward(batch.obs, actor_cache);
            const Eigen::MatrixXd pi_actions = to_box(tanh_out, env.box());
            Mlp::Cache critic_pi_cache;
            critic.forward(concat_rows(batch.obs, pi_actions), critic_pi_cache);
            Eigen::MatrixXd d_value = Eigen::MatrixXd::Constant(1, config.batch_size, -inv_batch);
            Mlp::Grads scratch = critic.zero_grads();
            const Eigen::MatrixXd d_inputs = critic.backward(d_value, critic_pi_cache, scratch);
            Eigen::MatrixXd d_actions = d_inputs.bottomRows(act_dim);
            for (int i = 0; i < act_dim; ++i) {
                d_actions.row(i) *= 0.5 * (env.box().hi[i] - env.box().lo[i]);
            }
            Mlp::Grads actor_grads = actor.zero_grads();
            actor.backward(d_actions, actor_cache, actor_grads);
            actor_opt.step(actor, actor_grads, config.actor_lr);

            actor_target.soft_update_from(actor, config.tau);
            critic_target.soft_update_from(critic, config.tau);

            // Runaway magnitudes are caught before they overflow into NaN;
            // observations are scaled to [-1, 1], so 1e12 is unambiguous.
            constexpr double runaway_bound = 1e12;
            if (!actor.finite() || !critic.finite() ||
                actor.max_abs_parameter() > runaway_bound ||
                critic.max_abs_parameter() > runaway_bound) {
                throw DivergenceDetected("non-finite or runaway network parameters at step " +
                                         std::to_string(step));
            }
          }
        }

        if (step % config.eval_interval == 0 || step == config.total_steps) {
            TrainCheckpoint checkpoint;
            checkpoint.step = step;
            checkpoint.mean_reward = reward_count ? reward_window / reward_count : 0.0;
            checkpoint.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (eval) {
                policy.actor = actor;
                const EvalSnapshot snap = eval(policy, step);
                checkpoint.mape_percent = snap.mape_percent;
                checkpoint.invalid_share_percent = snap.invalid_share_percent;
            }
            out.log.checkpoints.push_back(checkpoint);
            reward_window = 0.0;
            reward_count = 0;
        }
    }

    policy.actor = actor;
    out.policy = policy;
    return out;
}

namespace {

constexpr char kPolicyMagic[8] = {'o', 'p', 'f', 'p', 'o', 'l', 'v', '1'};

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw ParseError("policy checkpoint truncated");
    return value;
}

}  // namespace

void save_policy(const Policy& policy, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write policy checkpoint: " + path);
    out.write(kPolicyMagic, sizeof(kPolicyMagic));
    const auto& sizes = policy.actor.layer_sizes();
    write_raw(out, static_cast<std::int32_t>(sizes.size()));
    for (int s : sizes) write_raw(out, static_cast<std::int32_t>(s));
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto& w = policy.actor.weights[l];
        out.write(reinterpret_cast<const char*>(w.data()),
                  static_cast<std::streamsize>(sizeof(double) * w.size()));
        const auto& b = policy.actor.biases[l];
        out.write(reinterpret_cast<const char*>(b.data()),
                  static_cast<std::streamsize>(sizeof(double) * b.size()));
    }
    const int dims = policy.box.dims();
    write_raw(out, static_cast<std::int32_t>(dims));
    out.write(reinterpret_cast<const char*>(policy.box.lo.data()),
              static_cast<std::streamsize>(sizeof(double) * dims));
    out.write(reinterpret_cast<const char*>(policy.box.hi.data()),
              static_cast<std::streamsize>(sizeof(double) * dims));
}

Policy load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open policy checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kPolicyMagic, sizeof(magic)) != 0) {
        throw ParseError("not a policy checkpoint: " + path);
    }
    const auto n_sizes = read_raw<std::int32_t>(in);
    if (n_sizes < 2 || n_sizes > 64) throw ParseError("policy checkpoint corrupt");
    std::vector<int> sizes(static_cast<std::size_t>(n_sizes));
    for (auto& s : sizes) s = read_raw<std::int32_t>(in);

    RngStream dummy(0);
    Policy policy;
    policy.actor = Mlp(sizes, OutputActivation::tanh, dummy);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        auto& w = policy.actor.weights[l];
        in.read(reinterpret_cast<char*>(w.data()),
                static_cast<std::streamsize>(sizeof(double) * w.size()));
        auto& b = policy.actor.biases[l];
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(sizeof(double) * b.size()));
        if (!in) throw ParseError("policy checkpoint truncated");
    }
    const auto dims = read_raw<std::int32_t>(in);
    policy.box.lo.resize(dims);
    policy.box.hi.resize(dims);
    in.read(reinterpret_cast<char*>(policy.box.lo.data()),
            static_cast<std::streamsize>(sizeof(double) * dims));
    in.read(reinterpret_cast<char*>(policy.box.hi.data()),
            static_cast<std::streamsize>(sizeof(double) * dims));
    if (!in) throw ParseError("policy checkpoint truncated");
    return policy;
}

}  // namespace opfenv
