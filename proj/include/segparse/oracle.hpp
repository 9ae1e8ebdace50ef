#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "segparse/error.hpp"
#include "segparse/grammar.hpp"
#include "segparse/raster.hpp"

namespace segparse {

// Counters for what a training run touched: expert queries and evaluations
// of the ground-truth return used as a learning signal. Pure-RL learners
// must keep oracle_queries at 0; pure-IL learners keep reward_evaluations
// at 0.
struct TrainStats {
    long long oracle_queries = 0;
    long long reward_evaluations = 0;
    long long skipped_zero_behavior = 0;
};

// Binary Shannon entropy of a pixel set with `pos` positives out of `total`.
inline double entropy(std::int64_t pos, std::int64_t total) {
    if (total < 1) throw EmptyRegionError("entropy of an empty pixel set");
    if (pos < 0 || pos > total) throw BoundsError("positive count outside [0, total]");
    if (pos == 0 || pos == total) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(total);
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// Information gain of splitting `region` at `loc` along `axis`: parent
// entropy minus the size-weighted child entropies. Clamped to [0, H(parent)]
// to absorb rounding.
inline double information_gain(const LabelGrid& grid, const Region& region, Axis axis,
                               int loc) {
    const auto [left, right] = split_region(region, axis, loc);
    grid.require_inside(region);
    const std::int64_t total = region.area();
    const double parent = entropy(grid.positive_count(region), total);
    const double child_mix =
        (static_cast<double>(left.area()) / total) * entropy(grid.positive_count(left), left.area()) +
        (static_cast<double>(right.area()) / total) *
            entropy(grid.positive_count(right), right.area());
    return std::clamp(parent - child_mix, 0.0, parent);
}

struct SplitEvaluation {
    Axis axis = Axis::X;
    int loc = 0;
    double gain = 0.0;
};

// Highest-gain legal split of `region`, scanning every interior boundary on
// both axes. Ties prefer the smaller loc, then axis x. Returns nullopt when
// the region has no interior boundary at all.
inline std::optional<SplitEvaluation> best_split(const LabelGrid& grid, const Region& region) {
    grid.require_inside(region);
    std::optional<SplitEvaluation> best;
    const int max_loc = std::max(region.w, region.h) - 1;
    for (int loc = 1; loc <= max_loc; ++loc) {
        for (Axis axis : {Axis::X, Axis::Y}) {
            if (loc > region.extent(axis) - 1) continue;
            const double gain = information_gain(grid, region, axis, loc);
            if (!best || gain > best->gain) best = SplitEvaluation{axis, loc, gain};
        }
    }
    return best;
}

inline int majority_label(const LabelGrid& grid, const Region& region) {
    const std::int64_t pos = grid.positive_count(region);
    // A tie assigns no-paint: wasted paint is the costlier error.
    return 2 * pos > region.area() ? 1 : -1;
}

// The expert policy: assign the label of a pure region or the majority
// label at the depth cap; otherwise take the maximum-information-gain
// split. Impure regions below the cap are always split, so the expert
// reaches purity whenever the depth budget allows.
inline Action best_action(const LabelGrid& grid, const Region& region, int depth,
                          int max_depth, TrainStats* stats = nullptr) {
    if (stats) ++stats->oracle_queries;
    grid.require_inside(region);
    if (grid.uniform(region) || depth >= max_depth) {
        return Action::assign(majority_label(grid, region));
    }
    const auto split = best_split(grid, region);
    if (!split) return Action::assign(majority_label(grid, region));
    const double fraction =
        static_cast<double>(split->loc) / region.extent(split->axis);
    return Action::split(split->axis, fraction);
}

// Expands every pending node of `tree` with the expert.
inline void expand_with_expert(ParseTree& tree, const LabelGrid& grid,
                               TrainStats* stats = nullptr) {
    for (int id = tree.next_unexpanded(); id != ParseTree::kDone; id = tree.next_unexpanded()) {
        const ParseNode& n = tree.node(id);
        tree.apply_action(id, best_action(grid, n.region, n.depth, tree.max_depth(), stats));
    }
}

// Full expert parse of a grid at depth cap `max_depth`.
inline ParseTree oracle_parse(const LabelGrid& grid, int max_depth,
                              TrainStats* stats = nullptr) {
    ParseTree tree(Grammar{grid.width(), grid.height(), max_depth});
    expand_with_expert(tree, grid, stats);
    return tree;
}

// Monte-Carlo sample of the expert's cost-to-go: applies `action` at a
// pending node, completes that subtree with the expert on a scratch tree,
// and returns the subtree return. The input tree is left untouched.
inline std::int64_t expert_rollout_return(const ParseTree& tree, int node_id,
                                          const Action& action, const LabelGrid& grid,
                                          TrainStats* stats = nullptr) {
    const ParseNode& n = tree.node(node_id);
    if (!n.pending()) throw StateError("expert rollout needs a pending node");
    ParseTree scratch(n.region, tree.max_depth(), n.depth);
    scratch.apply_action(scratch.root(), action);
    expand_with_expert(scratch, grid, stats);
    if (stats) ++stats->reward_evaluations;
    return scratch.subtree_return(scratch.root(), grid);
}

}  // namespace segparse
