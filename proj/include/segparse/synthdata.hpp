#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segparse/error.hpp"
#include "segparse/png_io.hpp"
#include "segparse/raster.hpp"
#include "segparse/rng.hpp"

namespace segparse {

// Synthetic rectilinear objects: either guillotine partitions built by
// recursive axis-aligned cuts (solvable exactly by a depth-capped expert)
// or unions of overlapping painted rectangles.
struct GenConfig {
    int count = 60;
    int side = 64;
    int min_rects = 3;
    int max_rects = 8;
    bool guillotine_only = true;
    double noise = 0.05;
    std::uint64_t seed = 0;
    int max_split_depth = 5;  // guillotine mode: cap on recursive cut depth
    int min_extent = 4;       // guillotine mode: smallest leaf side

    nlohmann::json to_json() const {
        return {{"count", count},
                {"side", side},
                {"min_rects", min_rects},
                {"max_rects", max_rects},
                {"guillotine_only", guillotine_only},
                {"noise", noise},
                {"seed", seed},
                {"max_split_depth", max_split_depth},
                {"min_extent", min_extent}};
    }
};

struct DatasetItem {
    LabelGrid grid;
    std::string id;
};

struct Dataset {
    std::vector<DatasetItem> items;
    std::string provenance;  // "generated" or "loaded"

    std::size_t size() const { return items.size(); }
    const LabelGrid& grid(std::size_t i) const { return items[i].grid; }
};

namespace detail {

struct GenRegion {
    Region region;
    int depth;
};

inline void paint_region(std::vector<int>& labels, int side, const Region& r, int value) {
    for (int y = r.y; y < r.y + r.h; ++y) {
        for (int x = r.x; x < r.x + r.w; ++x) {
            labels[static_cast<std::size_t>(y) * side + x] = value;
        }
    }
}

// Random guillotine partition with about `target_leaves` leaves, each leaf
// labeled at random. Separable by <= max_split_depth recursive cuts by
// construction.
inline std::vector<int> guillotine_labels(const GenConfig& cfg, int target_leaves, Rng& rng) {
    std::vector<GenRegion> leaves{{Region{0, 0, cfg.side, cfg.side}, 0}};
    auto splittable = [&](const GenRegion& g) {
        return g.depth < cfg.max_split_depth &&
               (g.region.w >= 2 * cfg.min_extent || g.region.h >= 2 * cfg.min_extent);
    };
    while (static_cast<int>(leaves.size()) < target_leaves) {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            if (splittable(leaves[i])) candidates.push_back(i);
        }
        if (candidates.empty()) break;
        const std::size_t pick = candidates[rng.uniform_int(candidates.size())];
        const GenRegion parent = leaves[pick];
        const bool can_x = parent.region.w >= 2 * cfg.min_extent;
        const bool can_y = parent.region.h >= 2 * cfg.min_extent;
        const Axis axis = can_x && can_y ? (rng.uniform01() < 0.5 ? Axis::X : Axis::Y)
                                         : (can_x ? Axis::X : Axis::Y);
        const int extent = parent.region.extent(axis);
        const int loc = cfg.min_extent +
                        static_cast<int>(rng.uniform_int(extent - 2 * cfg.min_extent + 1));
        const auto [first, second] = split_region(parent.region, axis, loc);
        leaves[pick] = {first, parent.depth + 1};
        leaves.push_back({second, parent.depth + 1});
    }
    std::vector<int> labels(static_cast<std::size_t>(cfg.side) * cfg.side, -1);
    for (const GenRegion& leaf : leaves) {
        paint_region(labels, cfg.side, leaf.region, rng.uniform01() < 0.5 ? 1 : -1);
    }
    return labels;
}

// Union of `rects` random rectangles painted over background.
inline std::vector<int> rectangle_labels(const GenConfig& cfg, int rects, Rng& rng) {
    std::vector<int> labels(static_cast<std::size_t>(cfg.side) * cfg.side, -1);
    for (int i = 0; i < rects; ++i) {
        const int w = cfg.side / 8 + static_cast<int>(rng.uniform_int(cfg.side / 2));
        const int h = cfg.side / 8 + static_cast<int>(rng.uniform_int(cfg.side / 2));
        const int x = static_cast<int>(rng.uniform_int(cfg.side - w + 1));
        const int y = static_cast<int>(rng.uniform_int(cfg.side - h + 1));
        paint_region(labels, cfg.side, Region{x, y, w, h}, 1);
    }
    return labels;
}

// Quantized to exact 8-bit levels so PNG round trips are lossless.
inline double quantize8(double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return std::round(clamped * 255.0) / 255.0;
}

}  // namespace detail

inline LabelGrid generate_item(const GenConfig& cfg, std::uint64_t item_seed) {
    Rng rng(item_seed);
    const int rects = cfg.min_rects +
                      static_cast<int>(rng.uniform_int(cfg.max_rects - cfg.min_rects + 1));
    std::vector<int> labels = cfg.guillotine_only
                                  ? detail::guillotine_labels(cfg, rects, rng)
                                  : detail::rectangle_labels(cfg, rects, rng);
    std::vector<double> intensity(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double base = labels[i] > 0 ? 0.75 : 0.25;
        intensity[i] = detail::quantize8(base + rng.uniform(-cfg.noise, cfg.noise));
    }
    return LabelGrid(cfg.side, cfg.side, std::move(labels), {std::move(intensity)});
}

inline Dataset generate(const GenConfig& cfg) {
    if (cfg.side < 8) throw ConfigError("generator side must be >= 8");
    if (cfg.min_rects < 1 || cfg.max_rects < cfg.min_rects) {
        throw ConfigError("rectangle count range is empty");
    }
    Dataset out;
    out.provenance = "generated";
    for (int i = 0; i < cfg.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "item%04d", i);
        out.items.push_back({generate_item(cfg, Rng::derive(cfg.seed, i)), name});
    }
    return out;
}

// k disjoint test folds covering the dataset; train = complement.
inline std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold(std::size_t n, int k,
                                                                        std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    if (n < static_cast<std::size_t>(k)) throw ConfigError("fewer items than folds");
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
    std::vector<std::pair<std::vector<int>, std::vector<int>>> folds(k);
    for (int f = 0; f < k; ++f) {
        const std::size_t lo = n * f / k;
        const std::size_t hi = n * (f + 1) / k;
        auto& [train, test] = folds[f];
        for (std::size_t i = 0; i < n; ++i) {
            (i >= lo && i < hi ? test : train).push_back(order[i]);
        }
        std::sort(train.begin(), train.end());
        std::sort(test.begin(), test.end());
    }
    return folds;
}

inline void save(const Dataset& dataset, const std::string& dir,
                 const nlohmann::json& manifest_config = {}) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir);
    nlohmann::json ids = nlohmann::json::array();
    nlohmann::json single_class = nlohmann::json::array();
    for (const DatasetItem& item : dataset.items) {
        const LabelGrid& g = item.grid;
        std::vector<std::uint8_t> intensity(g.area());
        std::vector<std::uint8_t> mask(g.area());
        for (int y = 0; y < g.height(); ++y) {
            for (int x = 0; x < g.width(); ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * g.width() + x;
                intensity[i] =
                    static_cast<std::uint8_t>(std::lround(g.channel(0, x, y) * 255.0));
                mask[i] = g.label(x, y) > 0 ? 255 : 0;
            }
        }
        write_gray_png(dir + "/" + item.id + ".png", g.width(), g.height(), intensity.data());
        write_gray_png(dir + "/" + item.id + ".mask.png", g.width(), g.height(), mask.data());
        ids.push_back(item.id);
        if (g.uniform(g.full_region())) single_class.push_back(item.id);
    }
    nlohmann::json manifest{{"ids", ids},
                            {"provenance", dataset.provenance},
                            {"single_class", single_class}};
    if (!manifest_config.is_null() && !manifest_config.empty()) {
        manifest["config"] = manifest_config;
    }
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + dir + "/manifest.json");
    out << manifest.dump(2) << '\n';
}

inline Dataset load(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 4 && name.ends_with(".png") && !name.ends_with(".mask.png")) {
            ids.push_back(name.substr(0, name.size() - 4));
        }
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw IoError("no image/mask pairs found in " + dir);
    Dataset out;
    out.provenance = "loaded";
    int want_w = -1, want_h = -1;
    for (const std::string& id : ids) {
        const std::string mask_path = dir + "/" + id + ".mask.png";
        if (!fs::exists(mask_path)) throw IoError("missing mask for item '" + id + "'");
        int w = 0, h = 0, mw = 0, mh = 0;
        std::vector<std::uint8_t> intensity, mask;
        read_gray_png(dir + "/" + id + ".png", w, h, intensity);
        read_gray_png(mask_path, mw, mh, mask);
        if (w != mw || h != mh) throw IoError("image/mask extents differ for '" + id + "'");
        if (want_w < 0) {
            want_w = w;
            want_h = h;
        } else if (w != want_w || h != want_h) {
            throw IoError("item '" + id + "' has mismatched extents for this dataset");
        }
        std::vector<int> labels(mask.size());
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i] == 255) {
                labels[i] = 1;
            } else if (mask[i] == 0) {
                labels[i] = -1;
            } else {
                throw IoError("mask for '" + id + "' has non-binary value " +
                              std::to_string(static_cast<int>(mask[i])));
            }
        }
        std::vector<double> channel(intensity.size());
        for (std::size_t i = 0; i < intensity.size(); ++i) channel[i] = intensity[i] / 255.0;
        out.items.push_back({LabelGrid(w, h, std::move(labels), {std::move(channel)}), id});
    }
    return out;
}

}  // namespace segparse
