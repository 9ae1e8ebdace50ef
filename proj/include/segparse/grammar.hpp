#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "segparse/error.hpp"
#include "segparse/raster.hpp"

namespace segparse {

// Production rules of the binary split grammar: split a region along an
// axis, or close it with a paint / no-paint label.
enum class RuleKind { SplitX = 0, SplitY = 1, AssignPaint = 2, AssignNoPaint = 3 };

inline constexpr int kRuleCount = 4;
using RuleMask = std::array<bool, kRuleCount>;

inline bool is_split(RuleKind k) { return k == RuleKind::SplitX || k == RuleKind::SplitY; }

inline const char* rule_name(RuleKind k) {
    switch (k) {
        case RuleKind::SplitX: return "split-x";
        case RuleKind::SplitY: return "split-y";
        case RuleKind::AssignPaint: return "assign-paint";
        case RuleKind::AssignNoPaint: return "assign-nopaint";
    }
    return "?";
}

inline std::optional<RuleKind> rule_from_name(const std::string& s) {
    for (int i = 0; i < kRuleCount; ++i) {
        if (s == rule_name(static_cast<RuleKind>(i))) return static_cast<RuleKind>(i);
    }
    return std::nullopt;
}

// A rule choice plus, for split rules, a fractional split location in (0,1).
struct Action {
    RuleKind kind = RuleKind::AssignNoPaint;
    std::optional<double> split_fraction;

    static Action split(Axis axis, double fraction) {
        return {axis == Axis::X ? RuleKind::SplitX : RuleKind::SplitY, fraction};
    }
    static Action assign(int label) {
        return {label > 0 ? RuleKind::AssignPaint : RuleKind::AssignNoPaint, std::nullopt};
    }

    Axis axis() const { return kind == RuleKind::SplitX ? Axis::X : Axis::Y; }
    int label() const { return kind == RuleKind::AssignPaint ? 1 : -1; }

    bool operator==(const Action&) const = default;
};

// Maps a fractional split location onto a pixel offset, keeping both
// children non-empty for any fraction in (0,1).
inline int split_fraction_to_loc(double fraction, int extent) {
    const int loc = static_cast<int>(std::lround(fraction * extent));
    return std::clamp(loc, 1, extent - 1);
}

// The grammar itself: rule kinds are fixed; the start symbol covers the
// full grid; depth is capped at max_depth.
struct Grammar {
    int width = 0;
    int height = 0;
    int max_depth = 7;

    Region start() const { return Region{0, 0, width, height}; }
};

// Maximum number of expansion steps of a depth-D derivation.
inline int horizon_for_depth(int max_depth) { return (1 << (max_depth + 1)) - 1; }

struct ParseNode {
    enum class State { Pending, Split, Terminal };

    Region region;
    int depth = 0;
    State state = State::Pending;
    Action action;       // valid when state == Split
    int split_loc = 0;   // resolved pixel offset, valid when state == Split
    int children[2] = {-1, -1};
    int label = 0;       // +1 / -1, valid when state == Terminal

    bool pending() const { return state == State::Pending; }
    bool terminal() const { return state == State::Terminal; }
};

// Hierarchical decomposition of a region. Nodes are append-only; node 0 is
// the root. Expansion (applying an action to a pending node) is recorded in
// order. Derivations driven by next_unexpanded() visit nodes top-down
// depth-first, left/top child before right/bottom.
class ParseTree {
public:
    static constexpr int kDone = -1;

    ParseTree(Region root_region, int max_depth, int root_depth = 0) : max_depth_(max_depth) {
        if (max_depth < 1) throw IllegalActionError("max depth must be >= 1");
        ParseNode root;
        root.region = root_region;
        root.depth = root_depth;
        nodes_.push_back(root);
    }

    explicit ParseTree(const Grammar& grammar)
        : ParseTree(grammar.start(), grammar.max_depth) {}

    int root() const { return 0; }
    int size() const { return static_cast<int>(nodes_.size()); }
    int max_depth() const { return max_depth_; }
    const ParseNode& node(int id) const { return nodes_[check_id(id)]; }
    const std::vector<int>& expansion_order() const { return expansion_order_; }

    bool complete() const {
        for (const auto& n : nodes_) {
            if (n.pending()) return false;
        }
        return true;
    }

    // Rules applicable at a node: assignments always, splits only below the
    // depth cap and when the region has an interior boundary on that axis.
    RuleMask legal_rules(int id) const {
        const ParseNode& n = node(id);
        RuleMask mask{};
        const bool depth_ok = n.depth < max_depth_;
        mask[static_cast<int>(RuleKind::SplitX)] = depth_ok && n.region.w >= 2;
        mask[static_cast<int>(RuleKind::SplitY)] = depth_ok && n.region.h >= 2;
        mask[static_cast<int>(RuleKind::AssignPaint)] = true;
        mask[static_cast<int>(RuleKind::AssignNoPaint)] = true;
        return mask;
    }

    // Deepest-leftmost pending node in depth-first order, or kDone.
    int next_unexpanded() const {
        std::vector<int> stack{root()};
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            const ParseNode& n = nodes_[id];
            if (n.pending()) return id;
            if (n.state == ParseNode::State::Split) {
                stack.push_back(n.children[1]);
                stack.push_back(n.children[0]);
            }
        }
        return kDone;
    }

    // Expands a pending node: splits add two pending children (left/top
    // first), assignments make it terminal.
    void apply_action(int id, const Action& action) {
        check_id(id);
        if (!nodes_[id].pending()) {
            throw StateError("node " + std::to_string(id) + " is not pending");
        }
        if (is_split(action.kind)) {
            if (!action.split_fraction || *action.split_fraction <= 0.0 ||
                *action.split_fraction >= 1.0) {
                throw IllegalActionError("split action requires a fraction in (0,1)");
            }
            const Region region = nodes_[id].region;
            const int depth = nodes_[id].depth;
            if (depth >= max_depth_) {
                throw IllegalActionError("split below depth cap " + std::to_string(max_depth_));
            }
            const Axis axis = action.axis();
            const int extent = region.extent(axis);
            if (extent < 2) {
                throw IllegalActionError(std::string("cannot split 1-px extent on axis ") +
                                         axis_name(axis));
            }
            const int loc = split_fraction_to_loc(*action.split_fraction, extent);
            const auto [first, second] = split_region(region, axis, loc);
            // append_child may reallocate nodes_, so write fields by index
            // only after both appends.
            const int left = append_child(first, depth + 1);
            const int right = append_child(second, depth + 1);
            ParseNode& n = nodes_[id];
            n.state = ParseNode::State::Split;
            n.action = action;
            n.split_loc = loc;
            n.children[0] = left;
            n.children[1] = right;
        } else {
            ParseNode& n = nodes_[id];
            n.state = ParseNode::State::Terminal;
            n.action = action;
            n.label = action.label();
        }
        expansion_order_.push_back(id);
    }

    // Recursive return of the subtree under `id`: terminal nodes score their
    // leaf correlation, internal nodes sum their children (undiscounted).
    std::int64_t subtree_return(int id, const LabelGrid& grid) const {
        const ParseNode& n = node(id);
        switch (n.state) {
            case ParseNode::State::Pending:
                throw IncompleteTreeError("pending node " + std::to_string(id) +
                                          " has no return");
            case ParseNode::State::Terminal:
                return leaf_correlation(grid, n.region, n.label);
            case ParseNode::State::Split:
                return subtree_return(n.children[0], grid) +
                       subtree_return(n.children[1], grid);
        }
        return 0;
    }

    // Discounted variant of the return recursion. gamma = 1 recovers
    // subtree_return exactly; training always uses the undiscounted form.
    double subtree_return_discounted(int id, const LabelGrid& grid, double gamma) const {
        const ParseNode& n = node(id);
        switch (n.state) {
            case ParseNode::State::Pending:
                throw IncompleteTreeError("pending node " + std::to_string(id) +
                                          " has no return");
            case ParseNode::State::Terminal:
                return static_cast<double>(leaf_correlation(grid, n.region, n.label));
            case ParseNode::State::Split:
                return gamma * (subtree_return_discounted(n.children[0], grid, gamma) +
                                subtree_return_discounted(n.children[1], grid, gamma));
        }
        return 0.0;
    }

    // Writes each leaf's label over its region. The output covers the root
    // region (pixels indexed relative to the root's origin).
    PredictionGrid to_prediction() const {
        const Region root_region = nodes_[0].region;
        PredictionGrid out;
        out.width = root_region.w;
        out.height = root_region.h;
        out.predicted.assign(root_region.area(), 0);
        std::vector<int> stack{root()};
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            const ParseNode& n = nodes_[id];
            if (n.pending()) throw IncompleteTreeError("tree has pending nodes");
            if (n.state == ParseNode::State::Split) {
                stack.push_back(n.children[1]);
                stack.push_back(n.children[0]);
                continue;
            }
            for (int y = 0; y < n.region.h; ++y) {
                const int row = n.region.y - root_region.y + y;
                for (int x = 0; x < n.region.w; ++x) {
                    const int col = n.region.x - root_region.x + x;
                    out.predicted[static_cast<std::size_t>(row) * out.width + col] = n.label;
                }
            }
        }
        return out;
    }

    // Leaf ids of a complete tree, in depth-first order.
    std::vector<int> leaves() const {
        std::vector<int> result;
        std::vector<int> stack{root()};
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            const ParseNode& n = nodes_[id];
            if (n.pending()) throw IncompleteTreeError("tree has pending nodes");
            if (n.state == ParseNode::State::Split) {
                stack.push_back(n.children[1]);
                stack.push_back(n.children[0]);
            } else {
                result.push_back(id);
            }
        }
        return result;
    }

    bool operator==(const ParseTree& other) const {
        if (max_depth_ != other.max_depth_ || nodes_.size() != other.nodes_.size() ||
            expansion_order_ != other.expansion_order_) {
            return false;
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const ParseNode& a = nodes_[i];
            const ParseNode& b = other.nodes_[i];
            if (a.region != b.region || a.depth != b.depth || a.state != b.state) return false;
            if (a.state == ParseNode::State::Split &&
                (a.action != b.action || a.split_loc != b.split_loc ||
                 a.children[0] != b.children[0] || a.children[1] != b.children[1])) {
                return false;
            }
            if (a.state == ParseNode::State::Terminal && a.label != b.label) return false;
        }
        return true;
    }

    // Used by deserialization; validates structural invariants.
    static ParseTree from_parts(int max_depth, std::vector<ParseNode> nodes,
                                std::vector<int> expansion_order);

private:
    int check_id(int id) const {
        if (id < 0 || id >= size()) throw BoundsError("node id " + std::to_string(id));
        return id;
    }

    int append_child(Region region, int depth) {
        ParseNode child;
        child.region = region;
        child.depth = depth;
        nodes_.push_back(child);
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<ParseNode> nodes_;
    std::vector<int> expansion_order_;
    int max_depth_;
};

inline ParseTree ParseTree::from_parts(int max_depth, std::vector<ParseNode> nodes,
                                       std::vector<int> expansion_order) {
    if (nodes.empty()) throw StateError("tree must have a root");
    ParseTree tree(nodes[0].region, max_depth, nodes[0].depth);
    tree.nodes_ = std::move(nodes);
    tree.expansion_order_ = std::move(expansion_order);
    // Validate: children exist, tile the parent, and sit one level deeper.
    std::vector<int> seen(tree.nodes_.size(), 0);
    seen[0] = 1;
    for (int id = 0; id < tree.size(); ++id) {
        const ParseNode& n = tree.nodes_[id];
        if (n.state == ParseNode::State::Split) {
            if (!n.action.split_fraction) throw StateError("split node missing fraction");
            for (int child : n.children) {
                if (child <= id || child >= tree.size()) {
                    throw StateError("split node has invalid child id");
                }
                if (++seen[child] > 1) throw StateError("node has two parents");
                if (tree.nodes_[child].depth != n.depth + 1) {
                    throw StateError("child depth must be parent depth + 1");
                }
            }
            const auto [first, second] =
                split_region(n.region, n.action.axis(), n.split_loc);
            if (tree.nodes_[n.children[0]].region != first ||
                tree.nodes_[n.children[1]].region != second) {
                throw StateError("children do not tile their parent");
            }
        }
        if (n.depth > max_depth || (n.state == ParseNode::State::Split && n.depth >= max_depth)) {
            throw StateError("node exceeds the depth cap");
        }
        if (n.state == ParseNode::State::Terminal && n.label != 1 && n.label != -1) {
            throw StateError("terminal label must be +1 or -1");
        }
    }
    for (int c : seen) {
        if (c != 1) throw StateError("tree is not connected");
    }
    std::vector<int> expanded(tree.nodes_.size(), 0);
    for (int id : tree.expansion_order_) {
        if (id < 0 || id >= tree.size() || tree.nodes_[id].pending() || ++expanded[id] > 1) {
            throw StateError("expansion order is inconsistent");
        }
    }
    for (int id = 0; id < tree.size(); ++id) {
        if (!tree.nodes_[id].pending() && !expanded[id]) {
            throw StateError("expanded node missing from expansion order");
        }
    }
    return tree;
}

// Pixel accuracy identity helper: matches = (return + area) / 2.
inline std::int64_t matching_pixels(std::int64_t subtree_return_value, std::int64_t area) {
    return (subtree_return_value + area) / 2;
}

}  // namespace segparse
