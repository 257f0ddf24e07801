#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "fds/core.hpp"

namespace fds {

// One 8-connected region, stored as sorted row-major pixel indices.
struct Component {
    std::vector<std::size_t> pixels;

    std::size_t area() const noexcept { return pixels.size(); }
};

// Pairwise-disjoint regions of a source mask of the given dimensions.
struct ComponentSet {
    int width = 0;
    int height = 0;
    std::vector<Component> regions;

    std::size_t size() const noexcept { return regions.size(); }

    BinaryMask region_mask(std::size_t i) const {
        BinaryMask m(width, height);
        for (auto p : regions.at(i).pixels) m.set_index(p);
        return m;
    }

    BinaryMask union_mask() const {
        BinaryMask m(width, height);
        for (const auto& r : regions)
            for (auto p : r.pixels) m.set_index(p);
        return m;
    }
};

// 8-connected labeling. Regions are ordered by their first pixel in row-major
// scan order, and pixels within a region are sorted.
inline ComponentSet connected_components(const BinaryMask& mask) {
    ComponentSet out{mask.width(), mask.height(), {}};
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<std::size_t> stack;

    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask.at_index(start) || seen[start]) continue;
        Component comp;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            comp.pixels.push_back(p);
            const int r = static_cast<int>(p / w);
            const int c = static_cast<int>(p % w);
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int nr = r + dr;
                    const int nc = c + dc;
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                    const std::size_t q = static_cast<std::size_t>(nr) * w + nc;
                    if (mask.at_index(q) && !seen[q]) {
                        seen[q] = 1;
                        stack.push_back(q);
                    }
                }
            }
        }
        std::sort(comp.pixels.begin(), comp.pixels.end());
        out.regions.push_back(std::move(comp));
    }
    return out;
}

// Square k x k dilation clipped at the image border. Separable: a row pass and
// a column pass, each using a running count over the window.
inline BinaryMask dilate(const BinaryMask& mask, int k) {
    if (k < 1 || k % 2 == 0)
        throw InputError("dilation kernel size must be odd and >= 1, got " + std::to_string(k));
    if (k == 1) return mask;
    const int w = mask.width();
    const int h = mask.height();
    const int radius = k / 2;

    std::vector<std::uint8_t> rows(mask.size(), 0);
    for (int r = 0; r < h; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * w;
        int count = 0;
        // count holds the number of set pixels in [c - radius, c + radius]
        for (int c = 0; c < std::min(radius, w); ++c) count += mask.at_index(base + c);
        for (int c = 0; c < w; ++c) {
            if (c + radius < w) count += mask.at_index(base + c + radius);
            if (c - radius - 1 >= 0) count -= mask.at_index(base + c - radius - 1);
            rows[base + c] = count > 0;
        }
    }

    BinaryMask out(w, h);
    for (int c = 0; c < w; ++c) {
        int count = 0;
        for (int r = 0; r < std::min(radius, h); ++r) count += rows[static_cast<std::size_t>(r) * w + c];
        for (int r = 0; r < h; ++r) {
            if (r + radius < h) count += rows[static_cast<std::size_t>(r + radius) * w + c];
            if (r - radius - 1 >= 0) count -= rows[static_cast<std::size_t>(r - radius - 1) * w + c];
            if (count > 0) out.set(r, c);
        }
    }
    return out;
}

// A raw, possibly overlapping, zero-shot mask proposal.
struct RawProposal {
    BinaryMask mask;
    double confidence = 0.0;
};

// Nonempty masks of identical dimensions with confidences in [0,1].
struct ProposalSet {
    int width = 0;
    int height = 0;
    std::vector<BinaryMask> masks;
    std::vector<double> confidences;
    bool pairwise_disjoint = false;

    std::size_t size() const noexcept { return masks.size(); }
    bool empty() const noexcept { return masks.empty(); }
};

// Assign each contested pixel to one covering mask: highest confidence, then
// smallest original area, then earliest input position. Masks left empty are
// dropped; survivors keep their input order.
inline ProposalSet deoverlap(const std::vector<RawProposal>& raw) {
    ProposalSet out;
    if (raw.empty()) {
        out.pairwise_disjoint = true;
        return out;
    }
    out.width = raw.front().mask.width();
    out.height = raw.front().mask.height();
    std::vector<std::size_t> area(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        require_same_shape(raw.front().mask, raw[i].mask, "deoverlap");
        if (!(raw[i].confidence >= 0.0 && raw[i].confidence <= 1.0))
            throw InputError("proposal " + std::to_string(i) + " confidence outside [0,1]");
        area[i] = raw[i].mask.count();
    }

    auto better = [&](std::size_t a, std::size_t b) {
        if (raw[a].confidence != raw[b].confidence) return raw[a].confidence > raw[b].confidence;
        if (area[a] != area[b]) return area[a] < area[b];
        return a < b;
    };

    std::vector<BinaryMask> owned;
    owned.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) owned.emplace_back(out.width, out.height);

    const std::size_t npix = static_cast<std::size_t>(out.width) * out.height;
    for (std::size_t p = 0; p < npix; ++p) {
        std::size_t winner = raw.size();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (!raw[i].mask.at_index(p)) continue;
            if (winner == raw.size() || better(i, winner)) winner = i;
        }
        if (winner != raw.size()) owned[winner].set_index(p);
    }

    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!owned[i].any()) continue;
        out.masks.push_back(std::move(owned[i]));
        out.confidences.push_back(raw[i].confidence);
    }
    out.pairwise_disjoint = true;
    return out;
}

} // namespace fds
