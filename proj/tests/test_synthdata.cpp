#include <catch_amalgamated.hpp>

#include "segparse/eval.hpp"
#include "segparse/oracle.hpp"
#include "segparse/synthdata.hpp"
#include "test_util.hpp"

using namespace segparse;

TEST_CASE("generation is deterministic under a seed", "[synthdata]") {
    GenConfig cfg;
    cfg.count = 6;
    cfg.side = 32;
    cfg.seed = 42;
    const Dataset a = generate(cfg);
    const Dataset b = generate(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.items[i].id == b.items[i].id);
        CHECK(a.items[i].grid.labels() == b.items[i].grid.labels());
        CHECK(a.items[i].grid.channel_data(0) == b.items[i].grid.channel_data(0));
    }
    GenConfig other = cfg;
    other.seed = 43;
    const Dataset c = generate(other);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.items[i].grid.labels() != c.items[i].grid.labels()) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("guillotine items are solved exactly by the expert", "[synthdata]") {
    GenConfig cfg;
    cfg.count = 10;
    cfg.side = 32;
    cfg.guillotine_only = true;
    cfg.max_split_depth = 4;
    cfg.seed = 7;
    const Dataset dataset = generate(cfg);
    for (const DatasetItem& item : dataset.items) {
        const ParseTree tree = oracle_parse(item.grid, 7);
        CHECK(pixel_accuracy(tree.to_prediction(), item.grid) == 1.0);
    }
}

TEST_CASE("rectangle items paint unions of rectangles", "[synthdata]") {
    GenConfig cfg;
    cfg.count = 5;
    cfg.side = 32;
    cfg.guillotine_only = false;
    cfg.min_rects = 1;
    cfg.max_rects = 1;
    cfg.seed = 11;
    const Dataset dataset = generate(cfg);
    for (const DatasetItem& item : dataset.items) {
        // exactly one painted rectangle: the +1 set must be a contiguous box
        int min_x = cfg.side, max_x = -1, min_y = cfg.side, max_y = -1;
        std::int64_t painted = 0;
        for (int y = 0; y < cfg.side; ++y) {
            for (int x = 0; x < cfg.side; ++x) {
                if (item.grid.label(x, y) > 0) {
                    ++painted;
                    min_x = std::min(min_x, x);
                    max_x = std::max(max_x, x);
                    min_y = std::min(min_y, y);
                    max_y = std::max(max_y, y);
                }
            }
        }
        REQUIRE(painted > 0);
        const std::int64_t box =
            static_cast<std::int64_t>(max_x - min_x + 1) * (max_y - min_y + 1);
        CHECK(painted == box);
    }
}

TEST_CASE("intensities are noisy quantized label values", "[synthdata]") {
    GenConfig cfg;
    cfg.count = 3;
    cfg.side = 16;
    cfg.noise = 0.1;
    cfg.seed = 13;
    const Dataset dataset = generate(cfg);
    for (const DatasetItem& item : dataset.items) {
        for (int y = 0; y < cfg.side; ++y) {
            for (int x = 0; x < cfg.side; ++x) {
                const double v = item.grid.channel(0, x, y);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                // exact 8-bit quantization
                CHECK(v == std::round(v * 255.0) / 255.0);
                const double base = item.grid.label(x, y) > 0 ? 0.75 : 0.25;
                CHECK(std::abs(v - base) <= cfg.noise + 1.0 / 255.0);
            }
        }
    }
}

TEST_CASE("kfold partitions the dataset", "[synthdata]") {
    const auto folds = kfold(362, 3, 5);
    REQUIRE(folds.size() == 3);
    std::vector<int> seen(362, 0);
    for (const auto& [train, test] : folds) {
        CHECK(train.size() + test.size() == 362);
        for (int i : test) seen[i] += 1;
        // train is the complement of test
        std::vector<bool> in_test(362, false);
        for (int i : test) in_test[i] = true;
        for (int i : train) CHECK_FALSE(in_test[i]);
    }
    for (int c : seen) CHECK(c == 1);
    // near-equal fold sizes: 121/121/120
    CHECK(folds[0].second.size() + folds[1].second.size() + folds[2].second.size() == 362);
    for (const auto& [train, test] : folds) {
        CHECK(test.size() >= 120);
        CHECK(test.size() <= 121);
    }

    // desk-scale default: 60 items, 3 folds -> 40 train / 20 test
    const auto desk = kfold(60, 3, 1);
    for (const auto& [train, test] : desk) {
        CHECK(train.size() == 40);
        CHECK(test.size() == 20);
    }

    CHECK(kfold(362, 3, 5) == folds);  // deterministic
    CHECK_THROWS_AS(kfold(2, 3, 0), ConfigError);
}

TEST_CASE("save and load round trip a dataset losslessly", "[synthdata]") {
    testutil::TempDir dir("segparse-data");
    GenConfig cfg;
    cfg.count = 4;
    cfg.side = 24;
    cfg.seed = 17;
    const Dataset dataset = generate(cfg);
    save(dataset, dir.path(), cfg.to_json());

    const Dataset back = load(dir.path());
    REQUIRE(back.size() == dataset.size());
    CHECK(back.provenance == "loaded");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        CHECK(back.items[i].id == dataset.items[i].id);
        CHECK(back.items[i].grid.labels() == dataset.items[i].grid.labels());
        CHECK(back.items[i].grid.channel_data(0) ==
              dataset.items[i].grid.channel_data(0));
    }
    CHECK(std::filesystem::exists(dir.file("manifest.json")));
}

TEST_CASE("loader rejects broken directories", "[synthdata]") {
    testutil::TempDir dir("segparse-bad");
    CHECK_THROWS_AS(load(dir.path()), IoError);

    // image without a mask: error names the id
    const std::vector<std::uint8_t> px(16, 128);
    write_gray_png(dir.file("orphan.png"), 4, 4, px.data());
    try {
        load(dir.path());
        FAIL("expected an IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("orphan") != std::string::npos);
    }

    // non-binary mask value 128 is rejected
    testutil::TempDir dir2("segparse-bad2");
    write_gray_png(dir2.file("item.png"), 4, 4, px.data());
    write_gray_png(dir2.file("item.mask.png"), 4, 4, px.data());
    CHECK_THROWS_AS(load(dir2.path()), IoError);
}

TEST_CASE("datasets flag single-class items in the manifest", "[synthdata]") {
    testutil::TempDir dir("segparse-flag");
    Dataset dataset;
    dataset.provenance = "generated";
    dataset.items.push_back({LabelGrid(8, 8, std::vector<int>(64, 1)), "full"});
    std::vector<int> mixed(64, -1);
    mixed[0] = 1;
    dataset.items.push_back({LabelGrid(8, 8, mixed), "mixed"});
    save(dataset, dir.path());

    std::ifstream in(dir.file("manifest.json"));
    nlohmann::json manifest;
    in >> manifest;
    REQUIRE(manifest.contains("single_class"));
    CHECK(manifest["single_class"].size() == 1);
    CHECK(manifest["single_class"][0] == "full");
}

TEST_CASE("mismatched extents within a directory are rejected", "[synthdata]") {
    testutil::TempDir dir("segparse-mismatch");
    const std::vector<std::uint8_t> small(16, 255);
    const std::vector<std::uint8_t> big(64, 255);
    write_gray_png(dir.file("a.png"), 4, 4, small.data());
    write_gray_png(dir.file("a.mask.png"), 4, 4, small.data());
    write_gray_png(dir.file("b.png"), 8, 8, big.data());
    write_gray_png(dir.file("b.mask.png"), 8, 8, big.data());
    CHECK_THROWS_AS(load(dir.path()), IoError);
}
