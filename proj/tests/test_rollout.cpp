#include <catch_amalgamated.hpp>

#include "segparse/oracle.hpp"
#include "segparse/rollout.hpp"
#include "test_util.hpp"

using namespace segparse;

namespace {

const NetArch kTinyArch{{}, {}};  // linear heads straight off the features

PolicyNet tiny_net(const LabelGrid& grid, int side) {
    return PolicyNet(Shape{feature_channels(grid), side, side}, kTinyArch);
}

// Parameters that force one rule with near-certainty.
std::vector<double> forced_rule_params(const PolicyNet& net, RuleKind rule) {
    std::vector<double> theta(net.param_count(), 0.0);
    const auto [lo, hi] = net.rule_head_params();
    // biases are the last kRuleCount entries of the rule-head block
    theta[hi - kRuleCount + static_cast<int>(rule)] = 60.0;
    return theta;
}

LabelGrid left_half_grid(int side) {
    std::vector<int> labels(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            labels[static_cast<std::size_t>(y) * side + x] = x < side / 2 ? 1 : -1;
        }
    }
    return LabelGrid(side, side, std::move(labels));
}

}  // namespace

TEST_CASE("switch index covers the horizon uniformly", "[rollout]") {
    Rng rng(1);
    CHECK(sample_switch_index(1, rng) == 1);
    CHECK(sample_switch_index(1, rng) == 1);

    const int horizon = 15;
    std::vector<int> counts(horizon, 0);
    const int draws = 30000;
    for (int i = 0; i < draws; ++i) counts[sample_switch_index(horizon, rng) - 1]++;
    const double expected = static_cast<double>(draws) / horizon;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // chi-square critical value, df=14, p=0.01
    CHECK(chi2 < 29.141);
}

TEST_CASE("pure-expert rollouts reproduce the oracle parse", "[rollout]") {
    Rng grid_rng(2);
    const LabelGrid grid = testutil::random_grid(12, 12, grid_rng, 0.4);
    const PolicyNet net = tiny_net(grid, 8);
    const std::vector<double> theta(net.param_count(), 0.0);
    RolloutConfig cfg;
    cfg.beta = 1.0;
    cfg.max_depth = 4;
    cfg.feature_side = 8;

    const ParseTree expert_tree = oracle_parse(grid, 4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        // switch index beyond any possible episode: pure expert throughout
        const auto result =
            rollout_mixture(grid, net, theta, cfg, cfg.horizon() + 1, rng);
        CHECK(result.tree == expert_tree);
        CHECK(result.transition.step == result.episode_length);
    }
}

TEST_CASE("switch step one records the root state", "[rollout]") {
    Rng grid_rng(3);
    const LabelGrid grid = testutil::random_grid(10, 10, grid_rng);
    const PolicyNet net = tiny_net(grid, 8);
    const std::vector<double> theta(net.param_count(), 0.0);
    RolloutConfig cfg;
    cfg.beta = 0.5;
    cfg.max_depth = 3;
    cfg.feature_side = 8;
    Rng rng(4);
    const auto result = rollout_mixture(grid, net, theta, cfg, 1, rng);
    CHECK(result.transition.step == 1);
    CHECK(result.transition.features == featurize(grid, grid.full_region(), 8));
    CHECK(result.transition.legal == RuleMask{true, true, true, true});
}

TEST_CASE("forced wrong assignment scores minus one", "[rollout]") {
    const LabelGrid grid(8, 8, std::vector<int>(64, 1));  // everything painted
    const PolicyNet net = tiny_net(grid, 4);
    const auto theta = forced_rule_params(net, RuleKind::AssignNoPaint);
    RolloutConfig cfg;
    cfg.beta = 1.0;
    cfg.max_depth = 3;
    cfg.feature_side = 4;
    Rng rng(5);
    const auto result = rollout_mixture(grid, net, theta, cfg, 1, rng);
    CHECK(result.transition.rule == RuleKind::AssignNoPaint);
    CHECK(result.transition.g == -1.0);
}

TEST_CASE("clamped switch index records the final step", "[rollout]") {
    const LabelGrid uniform(6, 6, std::vector<int>(36, -1));
    const PolicyNet net = tiny_net(uniform, 4);
    const std::vector<double> theta(net.param_count(), 0.0);
    RolloutConfig cfg;
    cfg.beta = 1.0;  // expert assigns the uniform grid in one step
    cfg.max_depth = 5;
    cfg.feature_side = 4;
    Rng rng(6);
    const auto result = rollout_mixture(uniform, net, theta, cfg, 200, rng);
    CHECK(result.episode_length == 1);
    CHECK(result.transition.step == 1);
    // the tree still carries the expert action, not the recorded sample
    CHECK(result.tree.size() == 1);
    CHECK(result.tree.node(0).terminal());
    CHECK(result.tree.node(0).label == -1);
    CHECK(result.transition.g >= -1.0);
    CHECK(result.transition.g <= 1.0);
}

TEST_CASE("normalized returns stay within bounds", "[rollout]") {
    Rng grid_rng(7);
    const LabelGrid grid = testutil::random_grid(16, 16, grid_rng, 0.35);
    const PolicyNet net = tiny_net(grid, 8);
    Rng init(8);
    const auto theta = net.init_params(init);
    RolloutConfig cfg;
    cfg.beta = 0.5;
    cfg.max_depth = 4;
    cfg.feature_side = 8;
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const int t = sample_switch_index(cfg.horizon(), rng);
        const auto result = rollout_mixture(grid, net, theta, cfg, t, rng);
        CHECK(result.transition.g >= -1.0);
        CHECK(result.transition.g <= 1.0);
        CHECK(result.episode_length <= cfg.horizon());
        CHECK(result.tree.complete());
    }
}

TEST_CASE("pure-expert rollouts store expert cost-to-go samples", "[rollout]") {
    // with beta = 1 the stored G_t must equal an expert completion of the
    // recorded action at the recorded node
    Rng grid_rng(31);
    const LabelGrid grid = testutil::random_grid(14, 14, grid_rng, 0.45);
    const PolicyNet net = tiny_net(grid, 8);
    Rng init(32);
    const auto theta = net.init_params(init);
    RolloutConfig cfg;
    cfg.beta = 1.0;
    cfg.max_depth = 4;
    cfg.feature_side = 8;
    Rng rng(33);
    for (int trial = 0; trial < 25; ++trial) {
        const int t = sample_switch_index(cfg.horizon(), rng);
        const auto result = rollout_mixture(grid, net, theta, cfg, t, rng);
        const Transition& tr = result.transition;
        // locate the recorded node: the step-th expansion
        const int node_id = result.tree.expansion_order()[tr.step - 1];
        const ParseNode& n = result.tree.node(node_id);
        Action action{tr.rule, std::nullopt};
        if (is_split(tr.rule)) action.split_fraction = tr.split;
        ParseTree scratch(n.region, cfg.max_depth, n.depth);
        const std::int64_t expert_g = expert_rollout_return(scratch, 0, action, grid);
        CHECK(tr.g == static_cast<double>(expert_g) /
                          static_cast<double>(n.region.area()));
    }
}

TEST_CASE("replay memory sampling is deterministic and uniform", "[rollout]") {
    ReplayMemory memory;
    for (int i = 0; i < 100; ++i) {
        Transition t;
        t.step = i;
        memory.record(std::move(t));
    }
    CHECK(memory.size() == 100);

    Rng a(42), b(42);
    CHECK(memory.sample_indices(16, a) == memory.sample_indices(16, b));

    // single element
    ReplayMemory one;
    one.record(Transition{});
    Rng rng(1);
    CHECK(one.sample_indices(1, rng) == std::vector<std::size_t>{0});

    // batch larger than the memory returns everything
    const auto all = memory.sample_indices(1000, rng);
    CHECK(all.size() == 100);

    ReplayMemory empty;
    CHECK_THROWS_AS(empty.sample_indices(4, rng), StateError);
}

TEST_CASE("replay memory samples without replacement", "[rollout]") {
    ReplayMemory memory;
    for (int i = 0; i < 50; ++i) memory.record(Transition{});
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const auto batch = memory.sample_indices(20, rng);
        std::vector<bool> seen(50, false);
        for (const std::size_t idx : batch) {
            CHECK_FALSE(seen[idx]);
            seen[idx] = true;
        }
    }
}

TEST_CASE("replay inclusion frequencies are uniform", "[rollout]") {
    ReplayMemory memory;
    const int n = 500;
    for (int i = 0; i < n; ++i) memory.record(Transition{});
    Rng rng(13);
    const int reps = 2000, batch_size = 32;
    std::vector<int> counts(n, 0);
    for (int rep = 0; rep < reps; ++rep) {
        for (const std::size_t idx : memory.sample_indices(batch_size, rng)) counts[idx]++;
    }
    const double expected = static_cast<double>(reps) * batch_size / n;  // 128
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // chi-square critical value, df=499, p=0.01 (Wilson-Hilferty)
    const double df = n - 1;
    const double z = 2.3263478740408408;
    const double crit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
    CHECK(chi2 < crit);
}

TEST_CASE("replay memory honors its capacity FIFO", "[rollout]") {
    ReplayMemory memory(10);
    for (int i = 0; i < 25; ++i) {
        Transition t;
        t.step = i;
        memory.record(std::move(t));
    }
    CHECK(memory.size() == 10);
    CHECK(memory[0].step == 15);
    CHECK(memory[9].step == 24);
}

TEST_CASE("replay memory dump and restore round trips", "[rollout]") {
    testutil::TempDir dir("segparse-replay");
    Rng grid_rng(17);
    const LabelGrid grid = testutil::random_grid(8, 8, grid_rng);
    const PolicyNet net = tiny_net(grid, 4);
    Rng init(18);
    const auto theta = net.init_params(init);
    RolloutConfig cfg;
    cfg.beta = 0.7;
    cfg.max_depth = 3;
    cfg.feature_side = 4;
    ReplayMemory memory(64);
    Rng rng(19);
    for (int i = 0; i < 20; ++i) {
        const int t = sample_switch_index(cfg.horizon(), rng);
        memory.record(rollout_mixture(grid, net, theta, cfg, t, rng).transition);
    }
    memory.dump(dir.file("mem.bin"));
    const ReplayMemory back = ReplayMemory::restore(dir.file("mem.bin"));
    REQUIRE(back.size() == memory.size());
    CHECK(back.capacity() == memory.capacity());
    for (std::size_t i = 0; i < memory.size(); ++i) {
        CHECK(back[i] == memory[i]);
    }
    CHECK_THROWS_AS(ReplayMemory::restore(dir.file("missing.bin")), IoError);
}

TEST_CASE("sampled actions respect the split mode", "[rollout]") {
    Rng grid_rng(23);
    const LabelGrid grid = testutil::random_grid(8, 8, grid_rng);
    const PolicyNet net = tiny_net(grid, 4);
    Rng init(24);
    const auto theta = net.init_params(init);
    const auto features = featurize(grid, grid.full_region(), 4);
    const auto fwd = net.forward(theta, features, RuleMask{true, true, true, true});

    RolloutConfig det;
    det.split_mode = SplitMode::Deterministic;
    RolloutConfig noise;
    noise.split_mode = SplitMode::GaussianNoise;
    noise.split_scale = 0.0;
    RolloutConfig wide;
    wide.split_mode = SplitMode::GaussianNoise;
    wide.split_scale = 10.0;
    wide.clamp_eps = 1e-3;

    Rng rng(25);
    int splits_seen = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto a = sample_policy_action(fwd, det, rng);
        if (is_split(a.action.kind)) {
            CHECK(*a.action.split_fraction == fwd.split);
            ++splits_seen;
        }
        const auto b = sample_policy_action(fwd, noise, rng);
        if (is_split(b.action.kind)) {
            // sigma = 0: executed split equals mu exactly
            CHECK(*b.action.split_fraction == fwd.split);
        }
        const auto c = sample_policy_action(fwd, wide, rng);
        if (is_split(c.action.kind)) {
            CHECK(*c.action.split_fraction >= wide.clamp_eps);
            CHECK(*c.action.split_fraction <= 1.0 - wide.clamp_eps);
        }
    }
    CHECK(splits_seen > 100);
}

TEST_CASE("logit-normal density gradient matches finite differences", "[rollout]") {
    const double scale = 0.5;
    for (double l : {0.2, 0.5, 0.77}) {
        for (double m : {-0.4, 0.0, 1.2}) {
            const double h = 1e-6;
            const double numeric = (logit_normal_log_density(l, m + h, scale) -
                                    logit_normal_log_density(l, m - h, scale)) /
                                   (2.0 * h);
            CHECK(logit_normal_dlogp_dmean(l, m, scale) ==
                  Catch::Approx(numeric).margin(1e-6));
        }
    }
}
