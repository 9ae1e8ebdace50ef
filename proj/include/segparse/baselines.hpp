#pragma once

#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segparse/error.hpp"
#include "segparse/trainer.hpp"

namespace segparse {

enum class Algorithm {
    Bc,
    Dagger,
    Mcpg,
    Dpg,
    Aggrevated,
    AcAggrevated,
    OffMcpg,
    OffAcpg,
    Drag,
};

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Bc: return "bc";
        case Algorithm::Dagger: return "dagger";
        case Algorithm::Mcpg: return "mcpg";
        case Algorithm::Dpg: return "dpg";
        case Algorithm::Aggrevated: return "aggrevated";
        case Algorithm::AcAggrevated: return "ac-aggrevated";
        case Algorithm::OffMcpg: return "off-mcpg";
        case Algorithm::OffAcpg: return "off-acpg";
        case Algorithm::Drag: return "drag";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    for (int i = 0; i <= static_cast<int>(Algorithm::Drag); ++i) {
        const auto a = static_cast<Algorithm>(i);
        if (s == algorithm_name(a)) return a;
    }
    throw ConfigError("unknown algorithm '" + s + "'");
}

inline bool uses_critic(Algorithm a) {
    return a == Algorithm::Dpg || a == Algorithm::AcAggrevated || a == Algorithm::OffAcpg ||
           a == Algorithm::Drag;
}

struct BaselineConfig {
    Algorithm algorithm = Algorithm::Drag;
    double sigma_explore = 0.2;      // Gaussian split exploration (deterministic PG)
    double logitnormal_scale = 0.5;  // scale of the stochastic split distribution
    double lambda_split = 1.0;       // weight of the supervised split regression
};

// --- Supervised updates (behavior cloning / aggregated imitation) -----------

// Loss gradient of cross-entropy on the expert rule plus lambda * squared
// error of the deterministic split head against the expert location.
// Demonstrations are stored as transitions whose `rule`/`split` carry the
// expert action; returns are never read.
inline std::vector<double> supervised_gradient(const PolicyNet& net,
                                               std::span<const double> theta,
                                               const ReplayMemory& demos,
                                               std::span<const std::size_t> batch,
                                               double lambda, double* loss_out = nullptr) {
    if (batch.empty()) throw StateError("supervised update needs a non-empty batch");
    std::vector<double> grad(net.param_count(), 0.0);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const std::size_t idx : batch) {
        const Transition& d = demos[idx];
        const auto fwd = net.forward(theta, d.features, d.legal);
        const int r = static_cast<int>(d.rule);
        loss -= inv * std::log(std::max(fwd.probs[r], 1e-300));
        std::array<double, kRuleCount> dlogits{};
        for (int j = 0; j < kRuleCount; ++j) {
            dlogits[j] = d.legal[j] ? inv * (fwd.probs[j] - (j == r ? 1.0 : 0.0)) : 0.0;
        }
        double dpresplit = 0.0;
        if (is_split(d.rule)) {
            const double err = fwd.split - d.split;
            loss += inv * lambda * err * err;
            dpresplit = inv * lambda * 2.0 * err * logistic_grad(fwd.presplit);
        }
        net.backward(theta, fwd, dlogits, dpresplit, grad);
    }
    if (loss_out) *loss_out = loss;
    return grad;
}

inline double supervised_update(const PolicyNet& net, std::vector<double>& theta,
                                AdamOptimizer& opt, const ReplayMemory& demos,
                                std::span<const std::size_t> batch, double lambda) {
    double loss = 0.0;
    const auto grad = supervised_gradient(net, theta, demos, batch, lambda, &loss);
    opt.step(theta, grad);
    return loss;
}

// --- Stochastic policy-gradient updates --------------------------------------

enum class ReturnSource { LearnerMc, ExpertMc, Critic };

struct StochasticPgMode {
    ReturnSource source = ReturnSource::ExpertMc;
    bool off_policy = false;
    double logitnormal_scale = 0.5;
};

// Ascent direction of sum_t w_t * grad log pi(a_t|s_t) * G_t over the batch,
// where the action log-density is the categorical rule head plus, for split
// actions, the logit-normal split density. Off-policy mode weights the rule
// head by pi(r_t)/behavior_prob; transitions whose behavior probability is
// zero are skipped and counted through `skipped`.
inline std::vector<double> stochastic_pg_gradient(const PolicyNet& net,
                                                  std::span<const double> theta,
                                                  const CriticNet* critic,
                                                  std::span<const double> omega,
                                                  const ReplayMemory& memory,
                                                  std::span<const std::size_t> batch,
                                                  const StochasticPgMode& mode,
                                                  long long* skipped = nullptr) {
    if (batch.empty()) throw StateError("policy-gradient update needs a non-empty batch");
    if (mode.source == ReturnSource::Critic && critic == nullptr) {
        throw StateError("critic return source requires a critic network");
    }
    std::vector<double> grad(net.param_count(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const std::size_t idx : batch) {
        const Transition& t = memory[idx];
        const auto fwd = net.forward(theta, t.features, t.legal);
        const int r = static_cast<int>(t.rule);
        double weight = 1.0;
        if (mode.off_policy) {
            if (t.behavior_prob <= 0.0) {
                if (skipped) ++*skipped;
                continue;
            }
            weight = fwd.probs[r] / t.behavior_prob;
        }
        double g = t.g;
        if (mode.source == ReturnSource::Critic) {
            g = critic->forward(omega, t.features, t.rule, t.split).q;
        }
        const double coeff = inv * weight * g;
        std::array<double, kRuleCount> dlogits{};
        for (int j = 0; j < kRuleCount; ++j) {
            dlogits[j] = t.legal[j] ? coeff * ((j == r ? 1.0 : 0.0) - fwd.probs[j]) : 0.0;
        }
        double dpresplit = 0.0;
        if (is_split(t.rule)) {
            dpresplit = coeff * logit_normal_dlogp_dmean(t.split, fwd.presplit,
                                                         mode.logitnormal_scale);
        }
        net.backward(theta, fwd, dlogits, dpresplit, grad);
    }
    return grad;
}

// --- Deterministic policy gradient (learner-critic variant) ------------------

// Ascent direction through the critic alone: dQ/dl at l = mu(s_t) chained
// into the split head. The rule head is untouched, matching a
// deterministic-policy learner whose only trained action component is the
// split location.
inline std::vector<double> deterministic_pg_gradient(const PolicyNet& net,
                                                     const CriticNet& critic,
                                                     std::span<const double> theta,
                                                     std::span<const double> omega,
                                                     const ReplayMemory& memory,
                                                     std::span<const std::size_t> batch) {
    if (batch.empty()) throw StateError("policy-gradient update needs a non-empty batch");
    std::vector<double> grad(net.param_count(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const std::size_t idx : batch) {
        const Transition& t = memory[idx];
        const auto fwd = net.forward(theta, t.features, t.legal);
        const auto cfwd = critic.forward(omega, t.features, t.rule, fwd.split);
        const double dq_dl = critic.split_gradient(omega, cfwd);
        const double dpresplit = inv * dq_dl * logistic_grad(fwd.presplit);
        net.backward(theta, fwd, {}, dpresplit, grad);
    }
    return grad;
}

// --- Data collection ---------------------------------------------------------

namespace detail {

// Every node of the expert's parse as a (state, expert action, expert
// return) transition. Returns are evaluated only when `with_returns`.
inline void collect_expert_nodes(const LabelGrid& grid, int max_depth, int feature_side,
                                 bool with_returns, ReplayMemory& out, TrainStats* stats) {
    const ParseTree tree = oracle_parse(grid, max_depth, stats);
    for (int id = 0; id < tree.size(); ++id) {
        const ParseNode& n = tree.node(id);
        Transition t;
        t.features = featurize(grid, n.region, feature_side);
        RuleMask legal{};
        const bool depth_ok = n.depth < max_depth;
        legal[static_cast<int>(RuleKind::SplitX)] = depth_ok && n.region.w >= 2;
        legal[static_cast<int>(RuleKind::SplitY)] = depth_ok && n.region.h >= 2;
        legal[static_cast<int>(RuleKind::AssignPaint)] = true;
        legal[static_cast<int>(RuleKind::AssignNoPaint)] = true;
        t.legal = legal;
        t.rule = n.action.kind;
        t.split = n.state == ParseNode::State::Split
                      ? *n.action.split_fraction
                      : CriticNet::kPlaceholderSplit;
        t.step = 0;
        t.behavior_prob = 1.0;  // deterministic expert behavior
        if (with_returns) {
            if (stats) ++stats->reward_evaluations;
            t.g = static_cast<double>(tree.subtree_return(id, grid)) /
                  static_cast<double>(n.region.area());
        }
        out.record(std::move(t));
    }
}

// One learner-only episode; records every node with the learner's own
// normalized subtree returns.
inline void collect_learner_episode(const LabelGrid& grid, const PolicyNet& net,
                                    std::span<const double> theta, const RolloutConfig& rcfg,
                                    Rng& rng, ReplayMemory& out, TrainStats* stats) {
    ParseTree tree(Grammar{grid.width(), grid.height(), rcfg.max_depth});
    struct Visit {
        int node;
        Transition t;
    };
    std::vector<Visit> visits;
    for (int id = tree.next_unexpanded(); id != ParseTree::kDone;
         id = tree.next_unexpanded()) {
        const ParseNode& n = tree.node(id);
        Transition t;
        t.features = featurize(grid, n.region, rcfg.feature_side);
        t.legal = tree.legal_rules(id);
        const auto fwd = net.forward(theta, t.features, t.legal);
        const SampledAction sampled = sample_policy_action(fwd, rcfg, rng);
        t.rule = sampled.action.kind;
        t.split = sampled.action.split_fraction.value_or(CriticNet::kPlaceholderSplit);
        t.step = static_cast<int>(visits.size()) + 1;
        t.behavior_prob = sampled.rule_prob;
        visits.push_back({id, std::move(t)});
        tree.apply_action(id, sampled.action);
    }
    for (Visit& v : visits) {
        if (stats) ++stats->reward_evaluations;
        v.t.g = static_cast<double>(tree.subtree_return(v.node, grid)) /
                static_cast<double>(tree.node(v.node).region.area());
        out.record(std::move(v.t));
    }
}

// DAgger-style collection: execute the mixture, label every visited state
// with the expert's action. No returns are evaluated.
inline void collect_dagger_episode(const LabelGrid& grid, const PolicyNet& net,
                                   std::span<const double> theta, const RolloutConfig& rcfg,
                                   Rng& rng, ReplayMemory& out, TrainStats* stats) {
    ParseTree tree(Grammar{grid.width(), grid.height(), rcfg.max_depth});
    for (int id = tree.next_unexpanded(); id != ParseTree::kDone;
         id = tree.next_unexpanded()) {
        const ParseNode& n = tree.node(id);
        Transition t;
        t.features = featurize(grid, n.region, rcfg.feature_side);
        t.legal = tree.legal_rules(id);
        const Action expert = best_action(grid, n.region, n.depth, rcfg.max_depth, stats);
        t.rule = expert.kind;
        t.split = expert.split_fraction.value_or(CriticNet::kPlaceholderSplit);
        t.behavior_prob = 1.0;
        Action executed = expert;
        if (rng.uniform01() >= rcfg.beta) {
            const auto fwd = net.forward(theta, t.features, t.legal);
            executed = sample_policy_action(fwd, rcfg, rng).action;
        }
        out.record(std::move(t));
        tree.apply_action(id, executed);
    }
}

// Switching-index collection shared by the hybrid stochastic learners.
inline void collect_switching_epoch(const Dataset& dataset, std::span<const int> train_idx,
                                    const PolicyNet& net, std::span<const double> theta,
                                    const RolloutConfig& rcfg, std::uint64_t seed, int epoch,
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

// --- Unified training entry point --------------------------------------------

// Trains the selected learner. All learners share the trunk architecture,
// optimizer settings, and evaluation protocol; only the data they may see
// (expert actions vs. rewards) and their update rule differ.
inline TrainResult train_algorithm(const Dataset& dataset, std::span<const int> train_idx,
                                   const TrainConfig& cfg, const BaselineConfig& bcfg) {
    if (bcfg.algorithm == Algorithm::Drag) return train_drag(dataset, train_idx, cfg);
    if (dataset.items.empty()) throw StateError("training needs a non-empty dataset");

    std::vector<int> indices(train_idx.begin(), train_idx.end());
    if (indices.empty()) {
        indices.resize(dataset.size());
        std::iota(indices.begin(), indices.end(), 0);
    }
    const PolicyNet net = make_policy_net(dataset, cfg);
    const CriticNet critic = make_critic_net(dataset, cfg);
    const Algorithm algo = bcfg.algorithm;

    TrainResult result;
    Rng init_rng(Rng::derive(cfg.seed, 0x61c7));
    result.theta = net.init_params(init_rng, cfg.zero_init);
    if (uses_critic(algo)) result.omega = critic.init_params(init_rng, cfg.zero_init);
    result.memory = ReplayMemory(cfg.memory_capacity);

    AdamOptimizer actor_opt(cfg.actor_opt, result.theta.size());
    AdamOptimizer critic_opt(cfg.critic_opt, result.omega.size());
    Rng batch_rng(Rng::derive(cfg.seed, 0xb47c));

    RolloutConfig rcfg;
    rcfg.max_depth = cfg.max_depth;
    rcfg.feature_side = cfg.feature_side;
    rcfg.split_scale = bcfg.logitnormal_scale;
    switch (algo) {
        case Algorithm::Mcpg:
        case Algorithm::Aggrevated:
        case Algorithm::AcAggrevated:
        case Algorithm::OffMcpg:
        case Algorithm::OffAcpg:
            rcfg.split_mode = SplitMode::LogitNormal;
            break;
        case Algorithm::Dpg:
            rcfg.split_mode = SplitMode::GaussianNoise;
            rcfg.split_scale = bcfg.sigma_explore;
            break;
        default:
            rcfg.split_mode = SplitMode::Deterministic;
            break;
    }

    // Fixed datasets: behavior-cloning demonstrations and expert
    // trajectories for the off-policy learners are collected once.
    if (algo == Algorithm::Bc) {
        for (const int item : indices) {
            detail::collect_expert_nodes(dataset.grid(item), cfg.max_depth,
                                         cfg.feature_side, false, result.memory,
                                         &result.stats);
        }
    } else if (algo == Algorithm::OffMcpg || algo == Algorithm::OffAcpg) {
        for (const int item : indices) {
            detail::collect_expert_nodes(dataset.grid(item), cfg.max_depth,
                                         cfg.feature_side, true, result.memory,
                                         &result.stats);
        }
    }

    const StochasticPgMode expert_mc{ReturnSource::ExpertMc, false, bcfg.logitnormal_scale};
    const StochasticPgMode critic_src{ReturnSource::Critic, false, bcfg.logitnormal_scale};
    const StochasticPgMode off_expert_mc{ReturnSource::ExpertMc, true,
                                         bcfg.logitnormal_scale};
    const StochasticPgMode off_critic{ReturnSource::Critic, true, bcfg.logitnormal_scale};
    const StochasticPgMode learner_mc{ReturnSource::LearnerMc, false,
                                      bcfg.logitnormal_scale};

    double last_accuracy = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rcfg.beta = cfg.beta.at(epoch);
        double beta_logged = rcfg.beta;
        ReplayMemory on_policy(0);  // per-epoch buffer for the on-policy learner

        switch (algo) {
            case Algorithm::Bc:
            case Algorithm::OffMcpg:
            case Algorithm::OffAcpg:
                beta_logged = 1.0;  // fixed expert behavior
                break;
            case Algorithm::Dagger:
                for (const int item : indices) {
                    Rng rng(Rng::derive(cfg.seed,
                                        (static_cast<std::uint64_t>(epoch) << 24) + item));
                    detail::collect_dagger_episode(dataset.grid(item), net, result.theta,
                                                   rcfg, rng, result.memory, &result.stats);
                }
                break;
            case Algorithm::Mcpg:
                beta_logged = 0.0;
                for (const int item : indices) {
                    Rng rng(Rng::derive(cfg.seed,
                                        (static_cast<std::uint64_t>(epoch) << 24) + item));
                    detail::collect_learner_episode(dataset.grid(item), net, result.theta,
                                                    rcfg, rng, on_policy, &result.stats);
                }
                break;
            case Algorithm::Dpg:
                beta_logged = 0.0;
                for (const int item : indices) {
                    Rng rng(Rng::derive(cfg.seed,
                                        (static_cast<std::uint64_t>(epoch) << 24) + item));
                    detail::collect_learner_episode(dataset.grid(item), net, result.theta,
                                                    rcfg, rng, result.memory, &result.stats);
                }
                break;
            case Algorithm::Aggrevated:
            case Algorithm::AcAggrevated:
                detail::collect_switching_epoch(dataset, indices, net, result.theta, rcfg,
                                                cfg.seed, epoch, result.memory,
                                                &result.stats);
                break;
            default:
                break;
        }

        double critic_loss = 0.0;
        double actor_norm = 0.0;
        const ReplayMemory& source = algo == Algorithm::Mcpg ? on_policy : result.memory;
        const int updates = algo == Algorithm::Mcpg ? 1 : cfg.updates_per_epoch;
        for (int u = 0; u < updates; ++u) {
            const auto batch = source.sample_indices(
                algo == Algorithm::Mcpg ? source.size() : cfg.batch_size, batch_rng);
            switch (algo) {
                case Algorithm::Bc:
                case Algorithm::Dagger: {
                    auto grad = supervised_gradient(net, result.theta, source, batch,
                                                    bcfg.lambda_split);
                    actor_norm = l2_norm(grad);
                    actor_opt.step(result.theta, grad);
                    break;
                }
                case Algorithm::Mcpg: {
                    auto grad = stochastic_pg_gradient(net, result.theta, nullptr, {},
                                                       source, batch, learner_mc);
                    actor_norm = l2_norm(grad);
                    for (double& g : grad) g = -g;
                    actor_opt.step(result.theta, grad);
                    break;
                }
                case Algorithm::Dpg: {
                    auto grad = deterministic_pg_gradient(net, critic, result.theta,
                                                          result.omega, source, batch);
                    actor_norm = l2_norm(grad);
                    for (double& g : grad) g = -g;
                    actor_opt.step(result.theta, grad);
                    critic_loss = critic_update(critic, result.omega, critic_opt, source,
                                                batch);
                    break;
                }
                case Algorithm::Aggrevated: {
                    auto grad = stochastic_pg_gradient(net, result.theta, nullptr, {},
                                                       source, batch, expert_mc);
                    actor_norm = l2_norm(grad);
                    for (double& g : grad) g = -g;
                    actor_opt.step(result.theta, grad);
                    break;
                }
                case Algorithm::AcAggrevated: {
                    auto grad = stochastic_pg_gradient(net, result.theta, &critic,
                                                       result.omega, source, batch,
                                                       critic_src);
                    actor_norm = l2_norm(grad);
                    for (double& g : grad) g = -g;
                    actor_opt.step(result.theta, grad);
                    critic_loss = critic_update(critic, result.omega, critic_opt, source,
                                                batch);
                    break;
                }
                case Algorithm::OffMcpg: {
                    auto grad = stochastic_pg_gradient(net, result.theta, nullptr, {},
                                                       source, batch, off_expert_mc,
                                                       &result.stats.skipped_zero_behavior);
                    actor_norm = l2_norm(grad);
                    for (double& g : grad) g = -g;
                    actor_opt.step(result.theta, grad);
                    break;
                }
                case Algorithm::OffAcpg: {
                    auto grad = stochastic_pg_gradient(net, result.theta, &critic,
                                                       result.omega, source, batch,
                                                       off_critic,
                                                       &result.stats.skipped_zero_behavior);
                    actor_norm = l2_norm(grad);
                    for (double& g : grad) g = -g;
                    actor_opt.step(result.theta, grad);
                    critic_loss = critic_update(critic, result.omega, critic_opt, source,
                                                batch);
                    break;
                }
                default:
                    break;
            }
        }

        if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs - 1)) {
            last_accuracy = evaluate(net, result.theta, dataset, indices, cfg.max_depth,
                                     cfg.feature_side, cfg.jobs)
                                .mean;
        }
        result.log.push_back({epoch, beta_logged, last_accuracy, critic_loss, actor_norm});
    }
    if (result.stats.skipped_zero_behavior > 0) {
        std::fprintf(stderr,
                     "warning: %lld transitions skipped (zero behavior probability)\n",
                     result.stats.skipped_zero_behavior);
    }
    return result;
}

}  // namespace segparse
