#include <cmath>

#include <catch_amalgamated.hpp>

#include "segparse/eval.hpp"
#include "segparse/oracle.hpp"
#include "test_util.hpp"

using namespace segparse;

namespace {

// Independent entropy for cross-checking, written directly from the
// definition.
double entropy_ref(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

LabelGrid left_half_grid(int w, int h) {
    std::vector<int> labels(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            labels[static_cast<std::size_t>(y) * w + x] = x < w / 2 ? 1 : -1;
        }
    }
    return LabelGrid(w, h, std::move(labels));
}

// 2x2 pure blocks in a checkerboard over a 4x4 grid.
LabelGrid checkerboard_blocks() {
    std::vector<int> labels(16);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const int bx = x / 2, by = y / 2;
            labels[y * 4 + x] = (bx + by) % 2 == 0 ? 1 : -1;
        }
    }
    return LabelGrid(4, 4, std::move(labels));
}

}  // namespace

TEST_CASE("entropy of pure, balanced and skewed sets", "[oracle]") {
    CHECK(entropy(0, 8) == 0.0);
    CHECK(entropy(8, 8) == 0.0);
    CHECK(entropy(4, 8) == Catch::Approx(1.0).margin(1e-15));
    CHECK(entropy(2, 8) == Catch::Approx(0.8112781244591328).margin(1e-12));
    CHECK(entropy(2, 8) == Catch::Approx(entropy_ref(0.25)).margin(1e-15));
    CHECK_THROWS_AS(entropy(0, 0), EmptyRegionError);
    CHECK_THROWS_AS(entropy(5, 4), BoundsError);
}

TEST_CASE("information gain of a separating split", "[oracle]") {
    const LabelGrid grid = left_half_grid(4, 2);
    const Region full{0, 0, 4, 2};
    CHECK(information_gain(grid, full, Axis::X, 2) == Catch::Approx(1.0).margin(1e-12));
    const double expected = 1.0 - (2.0 / 8.0) * 0.0 - (6.0 / 8.0) * entropy_ref(1.0 / 3.0);
    CHECK(information_gain(grid, full, Axis::X, 1) ==
          Catch::Approx(expected).margin(1e-12));
    CHECK(expected == Catch::Approx(0.3112781244591328).margin(1e-12));

    const LabelGrid pure(4, 2, std::vector<int>(8, 1));
    CHECK(information_gain(pure, full, Axis::X, 2) == 0.0);
    CHECK_THROWS_AS(information_gain(grid, full, Axis::X, 4), InvalidSplitError);
}

TEST_CASE("information gain is bounded by the parent entropy", "[oracle]") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const LabelGrid grid = testutil::random_grid(10, 8, rng, 0.3);
        const Region full{0, 0, 10, 8};
        const double parent = entropy(grid.positive_count(full), full.area());
        for (int loc = 1; loc < 10; ++loc) {
            const double g = information_gain(grid, full, Axis::X, loc);
            CHECK(g >= 0.0);
            CHECK(g <= parent + 1e-12);
        }
    }
}

TEST_CASE("best_action assigns pure regions and majorities at the cap", "[oracle]") {
    const LabelGrid pure(4, 2, std::vector<int>(8, 1));
    CHECK(best_action(pure, Region{0, 0, 4, 2}, 0, 7) == Action::assign(1));

    std::vector<int> five_pos{1, 1, 1, -1, 1, 1, -1, -1};
    const LabelGrid mixed(4, 2, five_pos);
    CHECK(best_action(mixed, Region{0, 0, 4, 2}, 7, 7) == Action::assign(1));

    // tie at the cap goes to no-paint
    std::vector<int> tie{1, 1, -1, -1};
    const LabelGrid tied(2, 2, tie);
    CHECK(best_action(tied, Region{0, 0, 2, 2}, 7, 7) == Action::assign(-1));
}

TEST_CASE("best_action finds the unique maximal split", "[oracle]") {
    const LabelGrid grid = left_half_grid(4, 2);
    const Region full{0, 0, 4, 2};
    const Action act = best_action(grid, full, 0, 7);
    REQUIRE(act.kind == RuleKind::SplitX);
    CHECK(*act.split_fraction == Catch::Approx(0.5));

    // brute-force oracle: enumerate every candidate and confirm uniqueness
    double best_gain = -1.0;
    int best_count = 0;
    for (Axis axis : {Axis::X, Axis::Y}) {
        for (int loc = 1; loc < full.extent(axis); ++loc) {
            const double g = information_gain(grid, full, axis, loc);
            if (g > best_gain + 1e-12) {
                best_gain = g;
                best_count = 1;
            } else if (g > best_gain - 1e-12) {
                ++best_count;
            }
        }
    }
    CHECK(best_count == 1);
    CHECK(best_gain == Catch::Approx(1.0));
}

TEST_CASE("best_action is deterministic", "[oracle]") {
    Rng rng(23);
    const LabelGrid grid = testutil::random_grid(12, 12, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Region r{0, 0, 12, 12};
        CHECK(best_action(grid, r, 1, 7) == best_action(grid, r, 1, 7));
    }
}

TEST_CASE("oracle_parse solves separable grids exactly", "[oracle]") {
    const LabelGrid half = left_half_grid(4, 4);
    const ParseTree tree = oracle_parse(half, 7);
    CHECK(tree.leaves().size() == 2);
    CHECK(pixel_accuracy(tree.to_prediction(), half) == 1.0);

    const LabelGrid board = checkerboard_blocks();
    const ParseTree board_tree = oracle_parse(board, 3);
    CHECK(pixel_accuracy(board_tree.to_prediction(), board) == 1.0);

    const LabelGrid uniform(5, 5, std::vector<int>(25, -1));
    const ParseTree single = oracle_parse(uniform, 7);
    CHECK(single.size() == 1);
    CHECK(single.node(0).terminal());
    CHECK(single.node(0).label == -1);
}

TEST_CASE("oracle counts its queries", "[oracle]") {
    const LabelGrid half = left_half_grid(4, 4);
    TrainStats stats;
    const ParseTree tree = oracle_parse(half, 7, &stats);
    CHECK(stats.oracle_queries == tree.size());
}

TEST_CASE("expert_rollout_return leaves the input tree alone", "[oracle]") {
    std::vector<int> five_pos{1, 1, 1, -1, 1, 1, -1, -1};
    const LabelGrid mixed(4, 2, five_pos);
    ParseTree tree(Grammar{4, 2, 3});

    // assignment at a mixed region equals the leaf correlation directly
    const std::int64_t ret = expert_rollout_return(tree, 0, Action::assign(1), mixed);
    CHECK(ret == leaf_correlation(mixed, Region{0, 0, 4, 2}, 1));
    CHECK(tree.size() == 1);
    CHECK(tree.node(0).pending());

    // best action on a pure region recovers the region area
    const LabelGrid pure(4, 2, std::vector<int>(8, 1));
    ParseTree ptree(Grammar{4, 2, 3});
    const Action best = best_action(pure, Region{0, 0, 4, 2}, 0, 3);
    CHECK(expert_rollout_return(ptree, 0, best, pure) == 8);
}

TEST_CASE("expert action dominates immediate assignment", "[oracle]") {
    // Exhaustive small-grid check: the expert's chosen action, followed by
    // the expert, is never worse than closing the region with either label.
    // (Refining a partition can only raise the sum of majority
    // correlations.)
    Rng rng(29);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int w = 3 + static_cast<int>(rng.uniform_int(4));
        const int h = 3 + static_cast<int>(rng.uniform_int(4));
        const LabelGrid grid = testutil::random_grid(w, h, rng, 0.45);
        const int max_depth = 2;
        ParseTree tree(Grammar{w, h, max_depth});
        const Action chosen = best_action(grid, Region{0, 0, w, h}, 0, max_depth);
        const std::int64_t chosen_ret = expert_rollout_return(tree, 0, chosen, grid);
        CHECK(expert_rollout_return(tree, 0, Action::assign(1), grid) <= chosen_ret);
        CHECK(expert_rollout_return(tree, 0, Action::assign(-1), grid) <= chosen_ret);
        // and every split is at least as good as assigning afterwards
        for (Axis axis : {Axis::X, Axis::Y}) {
            const int extent = axis == Axis::X ? w : h;
            for (int loc = 1; loc < extent; ++loc) {
                const Action alt = Action::split(axis, static_cast<double>(loc) / extent);
                const std::int64_t alt_ret = expert_rollout_return(tree, 0, alt, grid);
                CHECK(alt_ret >=
                      std::max(expert_rollout_return(tree, 0, Action::assign(1), grid),
                               expert_rollout_return(tree, 0, Action::assign(-1), grid)));
                ++checked;
            }
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("maximum information gain is not maximum return", "[oracle]") {
    // Pinned counterexample: the gain-maximal cut (y=3, return 12) loses to
    // the cut at y=4 (return 14) under expert continuation at depth cap 2.
    // The expert is greedy on information gain, not on the return.
    const std::vector<int> labels{
        -1, 1,  -1, -1,  // -+--
        -1, -1, 1,  -1,  // --+-
        -1, -1, -1, -1,  // ----
        -1, 1,  1,  1,   // -+++
        1,  -1, -1, -1,  // +---
    };
    const LabelGrid grid(4, 5, labels);
    ParseTree tree(Grammar{4, 5, 2});
    const Action chosen = best_action(grid, Region{0, 0, 4, 5}, 0, 2);
    REQUIRE(chosen.kind == RuleKind::SplitY);
    CHECK(split_fraction_to_loc(*chosen.split_fraction, 5) == 3);
    const std::int64_t chosen_ret = expert_rollout_return(tree, 0, chosen, grid);
    const std::int64_t alt_ret =
        expert_rollout_return(tree, 0, Action::split(Axis::Y, 4.0 / 5.0), grid);
    CHECK(chosen_ret == 12);
    CHECK(alt_ret == 14);
}

TEST_CASE("oracle achieves exact accuracy on hand-built guillotine labels", "[oracle]") {
    // three vertical bands, mixed labels
    std::vector<int> labels(12 * 6);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 12; ++x) {
            labels[y * 12 + x] = x < 4 ? 1 : (x < 9 ? -1 : 1);
        }
    }
    const LabelGrid grid(12, 6, std::move(labels));
    const ParseTree tree = oracle_parse(grid, 4);
    CHECK(pixel_accuracy(tree.to_prediction(), grid) == 1.0);
}
