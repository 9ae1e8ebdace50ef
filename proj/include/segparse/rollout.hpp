#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segparse/checkpoint.hpp"
#include "segparse/error.hpp"
#include "segparse/grammar.hpp"
#include "segparse/nn.hpp"
#include "segparse/oracle.hpp"
#include "segparse/raster.hpp"
#include "segparse/rng.hpp"

namespace segparse {

// One stored decision point: the state at step `step`, the action taken
// there, and the return-to-go of its subtree normalized by region area.
struct Transition {
    std::vector<double> features;
    RuleMask legal{};
    RuleKind rule = RuleKind::AssignNoPaint;
    double split = CriticNet::kPlaceholderSplit;  // l_t; placeholder for assignments
    int step = 0;
    double g = 0.0;  // normalized return in [-1, 1]
    // Probability the behavior policy assigned to `rule` when this
    // transition was collected (1 for a deterministic expert choice).
    double behavior_prob = 1.0;

    bool operator==(const Transition&) const = default;
};

// Append-only transition store with an optional FIFO capacity.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity = 0) : capacity_(capacity) {}

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return data_.empty(); }
    const Transition& operator[](std::size_t i) const { return data_[i]; }

    void record(Transition t) {
        data_.push_back(std::move(t));
        if (capacity_ > 0 && data_.size() > capacity_) data_.pop_front();
    }

    // Uniform sample of `batch` distinct indices (the whole memory when
    // batch >= size). Deterministic given the generator state.
    std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
        if (data_.empty()) throw StateError("cannot sample from an empty replay memory");
        const std::size_t n = data_.size();
        if (batch >= n) {
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            return all;
        }
        // Partial Fisher-Yates over an index pool.
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> picked(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const std::size_t j = i + rng.uniform_int(n - i);
            std::swap(pool[i], pool[j]);
            picked[i] = pool[i];
        }
        return picked;
    }

    void dump(const std::string& path) const;
    static ReplayMemory restore(const std::string& path);

private:
    std::deque<Transition> data_;
    std::size_t capacity_;
};

// --- Replay memory binary format -------------------------------------------

inline constexpr char kReplayMagic[8] = {'S', 'P', 'R', 'M', '0', '0', '0', '1'};

inline void ReplayMemory::dump(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kReplayMagic, 8);
    detail::write_u64(out, capacity_);
    detail::write_u64(out, data_.size());
    for (const Transition& t : data_) {
        detail::write_u64(out, t.features.size());
        for (double v : t.features) detail::write_double_le(out, v);
        std::uint64_t mask = 0;
        for (int i = 0; i < kRuleCount; ++i) mask |= t.legal[i] ? (1ULL << i) : 0;
        detail::write_u64(out, mask);
        detail::write_u64(out, static_cast<std::uint64_t>(t.rule));
        detail::write_double_le(out, t.split);
        detail::write_u64(out, static_cast<std::uint64_t>(t.step));
        detail::write_double_le(out, t.g);
        detail::write_double_le(out, t.behavior_prob);
    }
    if (!out) throw IoError("failed writing " + path);
}

inline ReplayMemory ReplayMemory::restore(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kReplayMagic, 8) != 0) {
        throw IoError(path + " is not a replay memory dump");
    }
    ReplayMemory memory(detail::read_u64(in));
    const std::uint64_t count = detail::read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        Transition t;
        t.features.resize(detail::read_u64(in));
        for (auto& v : t.features) v = detail::read_double_le(in);
        const std::uint64_t mask = detail::read_u64(in);
        for (int b = 0; b < kRuleCount; ++b) t.legal[b] = (mask >> b) & 1;
        t.rule = static_cast<RuleKind>(detail::read_u64(in));
        t.split = detail::read_double_le(in);
        t.step = static_cast<int>(detail::read_u64(in));
        t.g = detail::read_double_le(in);
        t.behavior_prob = detail::read_double_le(in);
        if (!in) throw IoError(path + " is truncated");
        memory.record(std::move(t));
    }
    return memory;
}

// --- Policy sampling --------------------------------------------------------

// How the learner produces split locations during rollouts.
enum class SplitMode {
    Deterministic,  // l = mu(s)
    LogitNormal,    // l = logistic(presplit + scale * xi)
    GaussianNoise,  // l = clamp(mu(s) + sigma * xi, eps, 1 - eps)
};

struct RolloutConfig {
    double beta = 1.0;  // per-step probability of taking the expert action
    int max_depth = 7;
    int feature_side = 32;
    SplitMode split_mode = SplitMode::Deterministic;
    double split_scale = 0.5;   // logit-normal scale / gaussian sigma
    double clamp_eps = 1e-3;    // for GaussianNoise
    int horizon() const { return horizon_for_depth(max_depth); }
};

inline RuleKind sample_rule(const std::array<double, kRuleCount>& probs, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (int i = 0; i < kRuleCount; ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<RuleKind>(i);
    }
    for (int i = kRuleCount - 1; i >= 0; --i) {
        if (probs[i] > 0.0) return static_cast<RuleKind>(i);
    }
    throw IllegalActionError("rule distribution has no support");
}

struct SampledAction {
    Action action;
    double rule_prob = 1.0;  // probability of the chosen rule under the policy
};

// Draws a learner action: a rule from the masked categorical head and, for
// split rules, a location from the configured split distribution.
inline SampledAction sample_policy_action(const PolicyNet::Forward& f,
                                          const RolloutConfig& cfg, Rng& rng) {
    const RuleKind rule = sample_rule(f.probs, rng);
    SampledAction out;
    out.rule_prob = f.probs[static_cast<int>(rule)];
    if (!is_split(rule)) {
        out.action = Action{rule, std::nullopt};
        return out;
    }
    double l = f.split;
    switch (cfg.split_mode) {
        case SplitMode::Deterministic:
            break;
        case SplitMode::LogitNormal:
            l = logistic(f.presplit + cfg.split_scale * rng.normal());
            break;
        case SplitMode::GaussianNoise:
            l = std::clamp(f.split + cfg.split_scale * rng.normal(), cfg.clamp_eps,
                           1.0 - cfg.clamp_eps);
            break;
    }
    out.action = Action{rule, l};
    return out;
}

// Log-density of a logit-normal split sample and its gradient with respect
// to the location parameter (the split head pre-activation).
inline double logit_normal_log_density(double l, double mean_preactivation, double scale) {
    const double z = logit(l);
    const double d = (z - mean_preactivation) / scale;
    return -0.5 * d * d - std::log(scale) - 0.918938533204672742 /* log sqrt(2 pi) */
           - std::log(l * (1.0 - l));
}

inline double logit_normal_dlogp_dmean(double l, double mean_preactivation, double scale) {
    return (logit(l) - mean_preactivation) / (scale * scale);
}

// --- Mixture rollouts (Algorithm: parse with the mixture till the switching
// --- index, record the learner action there, follow the expert afterwards).

// Switching index, uniform over {1, ..., horizon}.
inline int sample_switch_index(int horizon, Rng& rng) {
    return 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(horizon)));
}

struct RolloutResult {
    ParseTree tree;
    Transition transition;
    int episode_length = 0;
};

// Rolls out one episode on `grid`: before the switching step each node is
// expanded by the expert with probability beta, otherwise by a sampled
// learner action; at the switching step the learner action is recorded and
// executed; afterwards the expert finishes the parse. When the episode ends
// before the switching step, the recorded step is clamped to the final one
// and its return is evaluated on a scratch expert completion.
inline RolloutResult rollout_mixture(const LabelGrid& grid, const PolicyNet& net,
                                     std::span<const double> theta,
                                     const RolloutConfig& cfg, int switch_step, Rng& rng,
                                     TrainStats* stats = nullptr) {
    ParseTree tree(Grammar{grid.width(), grid.height(), cfg.max_depth});
    Transition rec;
    int recorded_node = ParseTree::kDone;
    int step = 0;
    int last_node = ParseTree::kDone;
    std::vector<double> last_features;
    RuleMask last_legal{};

    for (int id = tree.next_unexpanded(); id != ParseTree::kDone;
         id = tree.next_unexpanded()) {
        ++step;
        const ParseNode& n = tree.node(id);
        if (step > switch_step) {
            tree.apply_action(id, best_action(grid, n.region, n.depth, cfg.max_depth, stats));
            continue;
        }
        std::vector<double> features = featurize(grid, n.region, cfg.feature_side);
        const RuleMask legal = tree.legal_rules(id);
        if (step == switch_step) {
            const auto fwd = net.forward(theta, features, legal);
            const SampledAction sampled = sample_policy_action(fwd, cfg, rng);
            rec.features = std::move(features);
            rec.legal = legal;
            rec.rule = sampled.action.kind;
            rec.split = sampled.action.split_fraction.value_or(CriticNet::kPlaceholderSplit);
            rec.step = step;
            rec.behavior_prob = sampled.rule_prob;
            recorded_node = id;
            tree.apply_action(id, sampled.action);
            continue;
        }
        // Mixture step before the switch.
        last_node = id;
        last_legal = legal;
        if (rng.uniform01() < cfg.beta) {
            last_features = std::move(features);
            tree.apply_action(id, best_action(grid, n.region, n.depth, cfg.max_depth, stats));
        } else {
            const auto fwd = net.forward(theta, features, legal);
            const SampledAction sampled = sample_policy_action(fwd, cfg, rng);
            last_features = std::move(features);
            tree.apply_action(id, sampled.action);
        }
    }

    RolloutResult result{std::move(tree), {}, step};
    if (recorded_node != ParseTree::kDone) {
        if (stats) ++stats->reward_evaluations;
        const std::int64_t raw = result.tree.subtree_return(recorded_node, grid);
        rec.g = static_cast<double>(raw) /
                static_cast<double>(result.tree.node(recorded_node).region.area());
    } else {
        // Episode ended before the switching step: clamp to the last step.
        // The learner-relevant action is sampled at that state and scored by
        // a scratch expert completion; the executed tree keeps the mixture
        // action it actually took.
        const ParseNode& n = result.tree.node(last_node);
        const auto fwd = net.forward(theta, last_features, last_legal);
        const SampledAction sampled = sample_policy_action(fwd, cfg, rng);
        rec.features = std::move(last_features);
        rec.legal = last_legal;
        rec.rule = sampled.action.kind;
        rec.split = sampled.action.split_fraction.value_or(CriticNet::kPlaceholderSplit);
        rec.step = step;
        rec.behavior_prob = sampled.rule_prob;
        ParseTree scratch(n.region, cfg.max_depth, n.depth);
        scratch.apply_action(scratch.root(), sampled.action);
        expand_with_expert(scratch, grid, stats);
        if (stats) ++stats->reward_evaluations;
        const std::int64_t raw = scratch.subtree_return(scratch.root(), grid);
        rec.g = static_cast<double>(raw) / static_cast<double>(n.region.area());
    }
    result.transition = std::move(rec);
    return result;
}

}  // namespace segparse
