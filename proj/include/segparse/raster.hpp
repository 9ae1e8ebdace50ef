#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "segparse/error.hpp"

namespace segparse {

enum class Axis { X, Y };

inline const char* axis_name(Axis a) { return a == Axis::X ? "x" : "y"; }

// Axis-aligned pixel rectangle: origin (x, y), extents (w, h), w,h >= 1.
struct Region {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }
    int extent(Axis a) const { return a == Axis::X ? w : h; }

    bool operator==(const Region&) const = default;
};

// Splits a region into two tiles along `axis` at interior offset `loc`
// (measured from the region's own origin). The left/top child keeps the
// first `loc` pixels.
inline std::pair<Region, Region> split_region(const Region& region, Axis axis, int loc) {
    const int extent = region.extent(axis);
    if (loc < 1 || loc > extent - 1) {
        throw InvalidSplitError("split loc " + std::to_string(loc) + " outside [1, " +
                                std::to_string(extent - 1) + "] on axis " + axis_name(axis));
    }
    if (axis == Axis::X) {
        return {Region{region.x, region.y, loc, region.h},
                Region{region.x + loc, region.y, region.w - loc, region.h}};
    }
    return {Region{region.x, region.y, region.w, loc},
            Region{region.x, region.y + loc, region.w, region.h - loc}};
}

// Ground-truth grid of paint labels in {+1, -1} together with one or more
// intensity channels in [0, 1]. When no channels are supplied, a single
// channel derived from the labels (+1 -> 1.0, -1 -> 0.0) is synthesized so
// every grid is observable by a learner. Immutable after construction.
class LabelGrid {
public:
    LabelGrid(int width, int height, std::vector<int> labels,
              std::vector<std::vector<double>> channels = {})
        : width_(width), height_(height), labels_(std::move(labels)),
          channels_(std::move(channels)) {
        if (width_ < 1 || height_ < 1) throw BoundsError("grid extents must be positive");
        const std::size_t n = static_cast<std::size_t>(width_) * height_;
        if (labels_.size() != n) throw BoundsError("label buffer does not match extents");
        for (int v : labels_) {
            if (v != 1 && v != -1) throw BoundsError("labels must be +1 or -1");
        }
        if (channels_.empty()) {
            std::vector<double> derived(n);
            for (std::size_t i = 0; i < n; ++i) derived[i] = labels_[i] > 0 ? 1.0 : 0.0;
            channels_.push_back(std::move(derived));
        }
        for (const auto& ch : channels_) {
            if (ch.size() != n) throw BoundsError("channel buffer does not match extents");
        }
        build_prefix();
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::int64_t area() const { return static_cast<std::int64_t>(width_) * height_; }
    int channel_count() const { return static_cast<int>(channels_.size()); }

    int label(int x, int y) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
    double channel(int c, int x, int y) const {
        return channels_[c][static_cast<std::size_t>(y) * width_ + x];
    }
    const std::vector<int>& labels() const { return labels_; }
    const std::vector<double>& channel_data(int c) const { return channels_[c]; }

    Region full_region() const { return Region{0, 0, width_, height_}; }

    bool contains(const Region& r) const {
        return r.x >= 0 && r.y >= 0 && r.w >= 1 && r.h >= 1 && r.x + r.w <= width_ &&
               r.y + r.h <= height_;
    }

    void require_inside(const Region& r) const {
        if (!contains(r)) {
            throw BoundsError("region (" + std::to_string(r.x) + "," + std::to_string(r.y) +
                              "," + std::to_string(r.w) + "," + std::to_string(r.h) +
                              ") outside " + std::to_string(width_) + "x" +
                              std::to_string(height_) + " grid");
        }
    }

    // Number of +1 pixels inside `r`, O(1) via the prefix-sum table.
    std::int64_t positive_count(const Region& r) const {
        require_inside(r);
        const int x1 = r.x + r.w, y1 = r.y + r.h;
        return prefix_at(x1, y1) - prefix_at(r.x, y1) - prefix_at(x1, r.y) +
               prefix_at(r.x, r.y);
    }

    bool uniform(const Region& r) const {
        const std::int64_t pos = positive_count(r);
        return pos == 0 || pos == r.area();
    }

private:
    void build_prefix() {
        prefix_.assign(static_cast<std::size_t>(width_ + 1) * (height_ + 1), 0);
        for (int y = 0; y < height_; ++y) {
            for (int x = 0; x < width_; ++x) {
                prefix_[idx(x + 1, y + 1)] = (label(x, y) > 0 ? 1 : 0) + prefix_[idx(x, y + 1)] +
                                             prefix_[idx(x + 1, y)] - prefix_[idx(x, y)];
            }
        }
    }

    std::size_t idx(int x, int y) const {
        return static_cast<std::size_t>(y) * (width_ + 1) + x;
    }
    std::int64_t prefix_at(int x, int y) const { return prefix_[idx(x, y)]; }

    int width_;
    int height_;
    std::vector<int> labels_;
    std::vector<std::vector<double>> channels_;
    std::vector<std::int64_t> prefix_;
};

// Predicted per-pixel labels in {+1, -1}.
struct PredictionGrid {
    int width = 0;
    int height = 0;
    std::vector<int> predicted;

    int at(int x, int y) const { return predicted[static_cast<std::size_t>(y) * width + x]; }
};

// Signed agreement between the ground truth and a uniform assignment over
// `region`: sum of label * assigned, in [-area, +area].
inline std::int64_t leaf_correlation(const LabelGrid& grid, const Region& region, int assigned) {
    if (assigned != 1 && assigned != -1) throw BoundsError("assigned label must be +1 or -1");
    const std::int64_t pos = grid.positive_count(region);
    const std::int64_t signed_sum = 2 * pos - region.area();  // sum of labels
    return assigned > 0 ? signed_sum : -signed_sum;
}

namespace detail {

// Per-axis area overlap weights for resampling `extent` pixels into `cells`
// output cells: for each cell, the covered pixels and their overlap lengths.
inline std::vector<std::vector<std::pair<int, double>>> pooling_weights(int extent, int cells) {
    std::vector<std::vector<std::pair<int, double>>> weights(cells);
    const double step = static_cast<double>(extent) / cells;
    for (int k = 0; k < cells; ++k) {
        const double lo = k * step;
        const double hi = (k + 1) * step;
        const int first = static_cast<int>(lo);
        int last = static_cast<int>(std::min<double>(extent - 1, hi - 1e-12));
        for (int p = first; p <= last; ++p) {
            const double overlap = std::min<double>(hi, p + 1) - std::max<double>(lo, p);
            if (overlap > 0) weights[k].push_back({p, overlap});
        }
    }
    return weights;
}

}  // namespace detail

// Resamples the region's intensity channels to a fixed side x side block by
// area-weighted average pooling and appends a constant channel holding the
// region's normalized size. Layout is channel-major: [c][row][col].
inline std::vector<double> featurize(const LabelGrid& grid, const Region& region, int side) {
    grid.require_inside(region);
    if (side < 1) throw BoundsError("feature side must be >= 1");
    const int chans = grid.channel_count();
    const auto wx = detail::pooling_weights(region.w, side);
    const auto wy = detail::pooling_weights(region.h, side);
    std::vector<double> out(static_cast<std::size_t>(chans + 1) * side * side);
    for (int c = 0; c < chans; ++c) {
        double* plane = out.data() + static_cast<std::size_t>(c) * side * side;
        for (int i = 0; i < side; ++i) {
            for (int j = 0; j < side; ++j) {
                double acc = 0.0, wsum = 0.0;
                for (const auto& [py, vy] : wy[i]) {
                    for (const auto& [px, vx] : wx[j]) {
                        const double w = vy * vx;
                        acc += w * grid.channel(c, region.x + px, region.y + py);
                        wsum += w;
                    }
                }
                plane[i * side + j] = acc / wsum;
            }
        }
    }
    const double size_value = static_cast<double>(region.area()) / grid.area();
    double* size_plane = out.data() + static_cast<std::size_t>(chans) * side * side;
    for (int i = 0; i < side * side; ++i) size_plane[i] = size_value;
    return out;
}

// Channel count of a featurize() block for this grid.
inline int feature_channels(const LabelGrid& grid) { return grid.channel_count() + 1; }

}  // namespace segparse
