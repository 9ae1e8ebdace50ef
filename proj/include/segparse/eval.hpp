#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "segparse/error.hpp"
#include "segparse/grammar.hpp"
#include "segparse/nn.hpp"
#include "segparse/png_io.hpp"
#include "segparse/raster.hpp"
#include "segparse/synthdata.hpp"

namespace segparse {

// Fraction of pixels whose predicted label matches the ground truth.
inline double pixel_accuracy(const PredictionGrid& pred, const LabelGrid& truth) {
    if (pred.width != truth.width() || pred.height != truth.height()) {
        throw BoundsError("prediction and truth extents differ");
    }
    std::int64_t matches = 0;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            if (pred.at(x, y) == truth.label(x, y)) ++matches;
        }
    }
    return static_cast<double>(matches) / static_cast<double>(truth.area());
}

// A pluggable per-node decision source: given the grid and the pending
// node, produce the action to apply.
using ActionFn = std::function<Action(const LabelGrid&, const ParseTree&, int)>;

inline ParseTree parse_with(const LabelGrid& grid, int max_depth, const ActionFn& actor) {
    ParseTree tree(Grammar{grid.width(), grid.height(), max_depth});
    for (int id = tree.next_unexpanded(); id != ParseTree::kDone;
         id = tree.next_unexpanded()) {
        tree.apply_action(id, actor(grid, tree, id));
    }
    return tree;
}

// Greedy action of the policy: most likely legal rule, deterministic split.
inline Action greedy_action(const PolicyNet& net, std::span<const double> theta,
                            const LabelGrid& grid, const ParseTree& tree, int id,
                            int feature_side) {
    const ParseNode& n = tree.node(id);
    const auto features = featurize(grid, n.region, feature_side);
    const auto f = net.forward(theta, features, tree.legal_rules(id));
    int best = -1;
    for (int i = 0; i < kRuleCount; ++i) {
        if (f.legal[i] && (best < 0 || f.probs[i] > f.probs[best])) best = i;
    }
    const auto kind = static_cast<RuleKind>(best);
    if (is_split(kind)) return Action{kind, f.split};
    return Action{kind, std::nullopt};
}

inline ParseTree greedy_parse(const LabelGrid& grid, const PolicyNet& net,
                              std::span<const double> theta, int max_depth,
                              int feature_side) {
    return parse_with(grid, max_depth, [&](const LabelGrid& g, const ParseTree& t, int id) {
        return greedy_action(net, theta, g, t, id, feature_side);
    });
}

struct EvalResult {
    std::vector<double> per_item;
    double mean = 0.0;
    std::string algorithm;
    int fold = -1;
};

// Parses every selected item with `actor` and scores pixel accuracy.
// Deterministic; items are independent, so `jobs` may fan out.
inline EvalResult evaluate_with(const Dataset& dataset, std::span<const int> subset,
                                int max_depth, const ActionFn& actor, int jobs = 1) {
    std::vector<int> indices(subset.begin(), subset.end());
    if (indices.empty()) {
        indices.resize(dataset.size());
        std::iota(indices.begin(), indices.end(), 0);
    }
    EvalResult result;
    result.per_item.assign(indices.size(), 0.0);
    const auto run = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const LabelGrid& grid = dataset.grid(indices[i]);
            const ParseTree tree = parse_with(grid, max_depth, actor);
            result.per_item[i] = pixel_accuracy(tree.to_prediction(), grid);
        }
    };
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(indices.size())));
    if (workers == 1) {
        run(0, indices.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (indices.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(indices.size(), lo + chunk);
            if (lo < hi) pool.emplace_back(run, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    if (!result.per_item.empty()) {
        result.mean = std::accumulate(result.per_item.begin(), result.per_item.end(), 0.0) /
                      static_cast<double>(result.per_item.size());
    }
    return result;
}

// Greedy policy evaluation ("most likely action at test time").
inline EvalResult evaluate(const PolicyNet& net, std::span<const double> theta,
                           const Dataset& dataset, std::span<const int> subset,
                           int max_depth, int feature_side, int jobs = 1) {
    return evaluate_with(
        dataset, subset, max_depth,
        [&](const LabelGrid& g, const ParseTree& t, int id) {
            return greedy_action(net, theta, g, t, id, feature_side);
        },
        jobs);
}

// --- Parse rendering --------------------------------------------------------

// PNG overlay of a complete parse: red fill on paint leaves, blue on
// no-paint, 1-px black borders around every leaf, blended over the first
// intensity channel.
inline void render(const ParseTree& tree, const LabelGrid& grid, const std::string& path) {
    const std::vector<int> leaf_ids = tree.leaves();  // throws on incomplete trees
    const int w = grid.width(), h = grid.height();
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto base = static_cast<std::uint8_t>(std::lround(grid.channel(0, x, y) * 255.0));
            const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
            rgb[i] = rgb[i + 1] = rgb[i + 2] = base;
        }
    }
    const auto blend = [&](int x, int y, int r, int g, int b) {
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
        rgb[i] = static_cast<std::uint8_t>((rgb[i] + r) / 2);
        rgb[i + 1] = static_cast<std::uint8_t>((rgb[i + 1] + g) / 2);
        rgb[i + 2] = static_cast<std::uint8_t>((rgb[i + 2] + b) / 2);
    };
    for (const int id : leaf_ids) {
        const ParseNode& n = tree.node(id);
        for (int y = n.region.y; y < n.region.y + n.region.h; ++y) {
            for (int x = n.region.x; x < n.region.x + n.region.w; ++x) {
                if (n.label > 0) {
                    blend(x, y, 255, 48, 48);
                } else {
                    blend(x, y, 48, 48, 255);
                }
            }
        }
    }
    const auto paint_black = [&](int x, int y) {
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
        rgb[i] = rgb[i + 1] = rgb[i + 2] = 0;
    };
    for (const int id : leaf_ids) {
        const Region& r = tree.node(id).region;
        for (int x = r.x; x < r.x + r.w; ++x) {
            paint_black(x, r.y);
            paint_black(x, r.y + r.h - 1);
        }
        for (int y = r.y; y < r.y + r.h; ++y) {
            paint_black(r.x, y);
            paint_black(r.x + r.w - 1, y);
        }
    }
    write_rgb_png(path, w, h, rgb.data());
}

// --- Comparison reports -----------------------------------------------------

struct ReportRow {
    std::string algorithm;
    int fold = 0;
    double train_acc = 0.0;
    double test_acc = std::nan("");
};

// Canonical presentation order, matching the published comparison table.
inline int report_rank(const std::string& algorithm) {
    static const char* order[] = {"oracle",      "mcpg",     "dpg",      "bc",
                                  "dagger",      "aggrevated", "ac-aggrevated",
                                  "off-mcpg",    "off-acpg", "drag"};
    for (std::size_t i = 0; i < std::size(order); ++i) {
        if (algorithm == order[i]) return static_cast<int>(i);
    }
    return 1000;
}

inline void write_report_csv(const std::string& path, std::vector<ReportRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        const int ra = report_rank(a.algorithm), rb = report_rank(b.algorithm);
        return ra != rb ? ra < rb : a.fold < b.fold;
    });
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "algorithm,fold,train_acc,test_acc\n";
    char line[160];
    for (const ReportRow& r : rows) {
        if (std::isnan(r.test_acc)) {
            std::snprintf(line, sizeof(line), "%s,%d,%.6f,\n", r.algorithm.c_str(), r.fold,
                          r.train_acc);
        } else {
            std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.6f\n", r.algorithm.c_str(),
                          r.fold, r.train_acc, r.test_acc);
        }
        out << line;
    }
}

inline std::string format_report_table(std::vector<ReportRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        const int ra = report_rank(a.algorithm), rb = report_rank(b.algorithm);
        return ra != rb ? ra < rb : a.fold < b.fold;
    });
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s %6s %12s %12s\n", "algorithm", "fold",
                  "train_acc", "test_acc");
    out += line;
    out += std::string(49, '-') + "\n";
    for (const ReportRow& r : rows) {
        if (std::isnan(r.test_acc)) {
            std::snprintf(line, sizeof(line), "%-16s %6d %11.2f%% %12s\n",
                          r.algorithm.c_str(), r.fold, 100.0 * r.train_acc, "---");
        } else {
            std::snprintf(line, sizeof(line), "%-16s %6d %11.2f%% %11.2f%%\n",
                          r.algorithm.c_str(), r.fold, 100.0 * r.train_acc,
                          100.0 * r.test_acc);
        }
        out += line;
    }
    return out;
}

}  // namespace segparse
