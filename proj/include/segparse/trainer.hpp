#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "segparse/error.hpp"
#include "segparse/eval.hpp"
#include "segparse/nn.hpp"
#include "segparse/optim.hpp"
#include "segparse/rollout.hpp"
#include "segparse/synthdata.hpp"

namespace segparse {

// Linear anneal from `start` to `end` over `anneal_epochs`, constant after.
struct BetaSchedule {
    double start = 1.0;
    double end = 0.5;
    int anneal_epochs = 100;

    double at(int epoch) const {
        if (epoch <= 0) return start;
        if (epoch >= anneal_epochs) return end;
        const double f = static_cast<double>(epoch) / anneal_epochs;
        return start + (end - start) * f;
    }
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 64;
    OptimizerConfig actor_opt{};
    OptimizerConfig critic_opt{};
    BetaSchedule beta{};
    int max_depth = 7;
    int feature_side = 32;
    NetArch arch{};
    std::uint64_t seed = 0;
    int updates_per_epoch = 1;
    bool critic_first = false;      // Algorithm order is actor first; flag flips it
    bool mean_baseline = false;     // subtract the batch-mean critic value in the
                                    // stochastic term
    bool zero_init = false;
    std::size_t memory_capacity = 0;
    int eval_every = 1;
    int jobs = 1;
};

struct TrainLogRow {
    int epoch = 0;
    double beta = 0.0;
    double train_accuracy = 0.0;
    double critic_loss = 0.0;
    double actor_grad_norm = 0.0;
};

inline void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,beta,train_accuracy,critic_loss,actor_grad_norm\n";
    char line[160];
    for (const TrainLogRow& row : log) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.10g,%.10g\n", row.epoch, row.beta,
                      row.train_accuracy, row.critic_loss, row.actor_grad_norm);
        out << line;
    }
}

struct TrainResult {
    std::vector<double> theta;
    std::vector<double> omega;  // empty for actor-only learners
    std::vector<TrainLogRow> log;
    TrainStats stats;
    ReplayMemory memory{0};
};

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// --- Critic regression (squared error against stored returns) ---------------

// Gradient of the mean squared error of Q(s_t, r_t, l_t) against G_t over
// the batch. Returns the loss through `loss_out`.
inline std::vector<double> critic_gradient(const CriticNet& critic,
                                           std::span<const double> omega,
                                           const ReplayMemory& memory,
                                           std::span<const std::size_t> batch,
                                           double* loss_out = nullptr) {
    if (batch.empty()) throw StateError("critic update needs a non-empty batch");
    std::vector<double> grad(critic.param_count(), 0.0);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const std::size_t idx : batch) {
        const Transition& t = memory[idx];
        const auto fwd = critic.forward(omega, t.features, t.rule, t.split);
        const double err = fwd.q - t.g;
        loss += err * err * inv;
        critic.backward(omega, fwd, 2.0 * err * inv, grad);
    }
    if (!std::isfinite(loss)) throw NumericError("critic loss is not finite");
    if (loss_out) *loss_out = loss;
    return grad;
}

inline double critic_update(const CriticNet& critic, std::vector<double>& omega,
                            AdamOptimizer& opt, const ReplayMemory& memory,
                            std::span<const std::size_t> batch) {
    double loss = 0.0;
    const auto grad = critic_gradient(critic, omega, memory, batch, &loss);
    opt.step(omega, grad);
    return loss;
}

// --- Mixed stochastic-deterministic actor update -----------------------------

// Ascent direction of the mixed objective over the batch: the score-function
// term for the rule head, log pi(r_t|s_t) * Q(s_t, r_t, mu(s_t)), plus the
// chain-rule term for the split head, dQ/dl at l = mu(s_t) times dmu/dtheta.
// The critic is a fixed function of (s, r, l) here; no gradient flows into
// omega.
inline std::vector<double> actor_gradient_mixed(const PolicyNet& net,
                                                const CriticNet& critic,
                                                std::span<const double> theta,
                                                std::span<const double> omega,
                                                const ReplayMemory& memory,
                                                std::span<const std::size_t> batch,
                                                bool mean_baseline = false) {
    if (batch.empty()) throw StateError("actor update needs a non-empty batch");
    std::vector<double> grad(net.param_count(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());

    std::vector<PolicyNet::Forward> pol(batch.size());
    std::vector<CriticNet::Forward> cri(batch.size());
    double baseline = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = memory[batch[i]];
        pol[i] = net.forward(theta, t.features, t.legal);
        cri[i] = critic.forward(omega, t.features, t.rule, pol[i].split);
        baseline += cri[i].q;
    }
    baseline = mean_baseline ? baseline / static_cast<double>(batch.size()) : 0.0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = memory[batch[i]];
        const int r = static_cast<int>(t.rule);
        const double coeff = (cri[i].q - baseline) * inv;
        std::array<double, kRuleCount> dlogits{};
        for (int j = 0; j < kRuleCount; ++j) {
            dlogits[j] = t.legal[j] ? coeff * ((j == r ? 1.0 : 0.0) - pol[i].probs[j]) : 0.0;
        }
        const double dq_dl = critic.split_gradient(omega, cri[i]);
        const double dpresplit = inv * dq_dl * logistic_grad(pol[i].presplit);
        net.backward(theta, pol[i], dlogits, dpresplit, grad);
    }
    return grad;
}

inline double actor_update_mixed(const PolicyNet& net, const CriticNet& critic,
                                 std::vector<double>& theta, std::span<const double> omega,
                                 AdamOptimizer& opt, const ReplayMemory& memory,
                                 std::span<const std::size_t> batch,
                                 bool mean_baseline = false) {
    auto grad = actor_gradient_mixed(net, critic, theta, omega, memory, batch, mean_baseline);
    const double norm = l2_norm(grad);
    for (double& g : grad) g = -g;  // ascend the objective
    opt.step(theta, grad);
    return norm;
}

// --- Full training loop ------------------------------------------------------

inline PolicyNet make_policy_net(const Dataset& dataset, const TrainConfig& cfg) {
    const int chans = feature_channels(dataset.grid(0));
    return PolicyNet(Shape{chans, cfg.feature_side, cfg.feature_side}, cfg.arch);
}

inline CriticNet make_critic_net(const Dataset& dataset, const TrainConfig& cfg) {
    const int chans = feature_channels(dataset.grid(0));
    return CriticNet(Shape{chans, cfg.feature_side, cfg.feature_side}, cfg.arch);
}

namespace detail {

// Collects one switching-index transition per training image into the
// replay memory. Per-item generator streams keep the result independent of
// rollout interleaving.
inline void collect_drag_epoch(const Dataset& dataset, std::span<const int> train_idx,
                               const PolicyNet& net, std::span<const double> theta,
                               RolloutConfig rcfg, std::uint64_t seed, int epoch,
                               ReplayMemory& memory, TrainStats* stats) {
    const int horizon = rcfg.horizon();
    for (const int item : train_idx) {
        Rng rng(Rng::derive(seed, (static_cast<std::uint64_t>(epoch) << 24) + item));
        const int t = sample_switch_index(horizon, rng);
        auto rollout = rollout_mixture(dataset.grid(item), net, theta, rcfg, t, rng, stats);
        memory.record(std::move(rollout.transition));
    }
}

}  // namespace detail

// Trains the mixed policy against the expert: one switching-index rollout
// per image per epoch, then minibatch updates of the actor (mixed update)
// and the critic (regression on stored expert returns), actor first.
inline TrainResult train_drag(const Dataset& dataset, std::span<const int> train_idx,
                              const TrainConfig& cfg) {
    if (dataset.items.empty()) throw StateError("training needs a non-empty dataset");
    std::vector<int> indices(train_idx.begin(), train_idx.end());
    if (indices.empty()) {
        indices.resize(dataset.size());
        std::iota(indices.begin(), indices.end(), 0);
    }
    const PolicyNet net = make_policy_net(dataset, cfg);
    const CriticNet critic = make_critic_net(dataset, cfg);

    TrainResult result;
    Rng init_rng(Rng::derive(cfg.seed, 0x61c7));
    result.theta = net.init_params(init_rng, cfg.zero_init);
    result.omega = critic.init_params(init_rng, cfg.zero_init);
    result.memory = ReplayMemory(cfg.memory_capacity);

    AdamOptimizer actor_opt(cfg.actor_opt, result.theta.size());
    AdamOptimizer critic_opt(cfg.critic_opt, result.omega.size());
    Rng batch_rng(Rng::derive(cfg.seed, 0xb47c));

    RolloutConfig rcfg;
    rcfg.max_depth = cfg.max_depth;
    rcfg.feature_side = cfg.feature_side;
    rcfg.split_mode = SplitMode::Deterministic;

    double last_accuracy = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rcfg.beta = cfg.beta.at(epoch);
        detail::collect_drag_epoch(dataset, indices, net, result.theta, rcfg, cfg.seed,
                                   epoch, result.memory, &result.stats);
        double critic_loss = 0.0;
        double actor_norm = 0.0;
        for (int u = 0; u < cfg.updates_per_epoch; ++u) {
            const auto batch = result.memory.sample_indices(cfg.batch_size, batch_rng);
            if (cfg.critic_first) {
                critic_loss = critic_update(critic, result.omega, critic_opt,
                                            result.memory, batch);
                actor_norm = actor_update_mixed(net, critic, result.theta, result.omega,
                                                actor_opt, result.memory, batch,
                                                cfg.mean_baseline);
            } else {
                actor_norm = actor_update_mixed(net, critic, result.theta, result.omega,
                                                actor_opt, result.memory, batch,
                                                cfg.mean_baseline);
                critic_loss = critic_update(critic, result.omega, critic_opt,
                                            result.memory, batch);
            }
        }
        if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs - 1)) {
            last_accuracy = evaluate(net, result.theta, dataset, indices, cfg.max_depth,
                                     cfg.feature_side, cfg.jobs)
                                .mean;
        }
        result.log.push_back({epoch, rcfg.beta, last_accuracy, critic_loss, actor_norm});
    }
    return result;
}

}  // namespace segparse
