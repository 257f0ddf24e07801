#pragma once

// Prototype construction from support features and cosine matching against
// query features.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fds/core.hpp"
#include "fds/dataset.hpp"
#include "fds/features.hpp"

namespace fds {

enum class PrototypeStrategy { dense, patch, pool };

inline const char* to_string(PrototypeStrategy s) {
    switch (s) {
    case PrototypeStrategy::dense: return "dense";
    case PrototypeStrategy::patch: return "patch";
    case PrototypeStrategy::pool: return "pool";
    }
    return "?";
}

inline PrototypeStrategy parse_prototype_strategy(std::string_view s) {
    if (s == "dense") return PrototypeStrategy::dense;
    if (s == "patch") return PrototypeStrategy::patch;
    if (s == "pool" || s == "pooling") return PrototypeStrategy::pool;
    throw InputError("unknown prototype strategy '" + std::string(s) + "' (expected dense, patch or pool)");
}

inline constexpr double kCosineEpsilon = 1e-8;

// n vectors of `dim` floats, row-major.
struct VectorSet {
    int dim = 0;
    std::vector<float> data;

    std::size_t size() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, static_cast<std::size_t>(dim)}; }
    void push(std::span<const float> v) { data.insert(data.end(), v.begin(), v.end()); }
};

struct SupportPartition {
    std::vector<std::size_t> fg_cells;  // row-major cell indices with mask > 0
    std::vector<std::size_t> bg_cells;
    VectorSet foreground;
    VectorSet background;
};

// Splits support features by the feature-resolution support mask.
inline SupportPartition partition_support(const FeatureMap& features, const BinaryMask& mask) {
    if (mask.width() != features.width() || mask.height() != features.height())
        throw InputError("support mask " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                         " does not match feature grid " + std::to_string(features.width()) + "x" +
                         std::to_string(features.height()));
    SupportPartition p;
    p.foreground.dim = p.background.dim = features.channels();
    for (std::size_t i = 0; i < features.cells(); ++i) {
        if (mask.at_index(i)) {
            p.fg_cells.push_back(i);
            p.foreground.push(features.cell(i));
        } else {
            p.bg_cells.push_back(i);
            p.background.push(features.cell(i));
        }
    }
    if (p.fg_cells.empty()) throw InputError("support mask has no foreground cells at feature resolution");
    if (p.bg_cells.empty()) throw InputError("no background prototypes available (support mask is all foreground)");
    return p;
}

struct PrototypeSet {
    VectorSet foreground;
    VectorSet background;
    PrototypeStrategy fg_strategy = PrototypeStrategy::patch;
    PrototypeStrategy bg_strategy = PrototypeStrategy::dense;

    int dim() const noexcept { return foreground.dim; }
};

struct PrototypeConfig {
    PrototypeStrategy fg_strategy = PrototypeStrategy::patch;
    PrototypeStrategy bg_strategy = PrototypeStrategy::dense;
    int patch_size = 3;  // odd window side for the patch strategy, stride 1
};

// One support shot at feature resolution.
struct SupportShot {
    const FeatureMap* features;
    const BinaryMask* mask;
};

namespace detail {

// For each cell of `cells` (all sharing membership value `side` in `mask`),
// the mean feature over its patch x patch window restricted to cells with the
// same membership. The output keeps one vector per input cell.
inline void masked_patch_average(const FeatureMap& f, const BinaryMask& mask, bool side,
                                 const std::vector<std::size_t>& cells, int patch, VectorSet& out) {
    const int radius = patch / 2;
    const int w = f.width();
    const int h = f.height();
    std::vector<double> acc(f.channels());
    std::vector<float> mean(f.channels());
    for (auto idx : cells) {
        const int r = static_cast<int>(idx / w);
        const int c = static_cast<int>(idx % w);
        std::fill(acc.begin(), acc.end(), 0.0);
        int n = 0;
        for (int rr = std::max(0, r - radius); rr <= std::min(h - 1, r + radius); ++rr) {
            for (int cc = std::max(0, c - radius); cc <= std::min(w - 1, c + radius); ++cc) {
                if (mask(rr, cc) != side) continue;
                auto v = f.cell(rr, cc);
                for (int ch = 0; ch < f.channels(); ++ch) acc[ch] += v[ch];
                ++n;
            }
        }
        for (int ch = 0; ch < f.channels(); ++ch) mean[ch] = static_cast<float>(acc[ch] / n);
        out.push(mean);
    }
}

inline VectorSet drop_zero_vectors(const VectorSet& in) {
    VectorSet out{in.dim, {}};
    for (std::size_t i = 0; i < in.size(); ++i) {
        auto v = in.row(i);
        if (std::any_of(v.begin(), v.end(), [](float x) { return x != 0.0f; })) out.push(v);
    }
    return out;
}

inline VectorSet build_side(std::span<const SupportShot> shots, const std::vector<SupportPartition>& parts,
                            bool foreground, PrototypeStrategy strategy, int patch) {
    const int dim = shots.front().features->channels();
    VectorSet out{dim, {}};
    if (strategy == PrototypeStrategy::pool) {
        std::vector<double> acc(dim, 0.0);
        std::size_t n = 0;
        for (const auto& p : parts) {
            const auto& vs = foreground ? p.foreground : p.background;
            for (std::size_t i = 0; i < vs.size(); ++i) {
                auto v = vs.row(i);
                for (int ch = 0; ch < dim; ++ch) acc[ch] += v[ch];
                ++n;
            }
        }
        std::vector<float> mean(dim);
        for (int ch = 0; ch < dim; ++ch) mean[ch] = static_cast<float>(acc[ch] / static_cast<double>(n));
        out.push(mean);
        return out;
    }
    for (std::size_t s = 0; s < shots.size(); ++s) {
        const auto& p = parts[s];
        if (strategy == PrototypeStrategy::dense) {
            const auto& vs = foreground ? p.foreground : p.background;
            out.data.insert(out.data.end(), vs.data.begin(), vs.data.end());
        } else {
            masked_patch_average(*shots[s].features, *shots[s].mask, foreground,
                                 foreground ? p.fg_cells : p.bg_cells, patch, out);
        }
    }
    return out;
}

} // namespace detail

// Per-shot vector sets are concatenated; all-zero prototypes are dropped.
inline PrototypeSet build_prototypes(std::span<const SupportShot> shots, const PrototypeConfig& cfg = {}) {
    if (shots.empty()) throw InputError("at least one support shot is required");
    if (cfg.patch_size < 1 || cfg.patch_size % 2 == 0)
        throw InputError("patch size must be odd and >= 1, got " + std::to_string(cfg.patch_size));
    const int dim = shots.front().features->channels();
    std::vector<SupportPartition> parts;
    parts.reserve(shots.size());
    for (const auto& s : shots) {
        if (s.features->channels() != dim) throw InputError("support shots have different channel counts");
        parts.push_back(partition_support(*s.features, *s.mask));
    }

    PrototypeSet p;
    p.fg_strategy = cfg.fg_strategy;
    p.bg_strategy = cfg.bg_strategy;
    p.foreground = detail::drop_zero_vectors(detail::build_side(shots, parts, true, cfg.fg_strategy, cfg.patch_size));
    p.background = detail::drop_zero_vectors(detail::build_side(shots, parts, false, cfg.bg_strategy, cfg.patch_size));
    if (p.foreground.size() == 0) throw InputError("all foreground prototypes are zero vectors");
    if (p.background.size() == 0) throw InputError("all background prototypes are zero vectors");
    return p;
}

inline PrototypeSet build_prototypes(const FeatureMap& features, const BinaryMask& mask, const PrototypeConfig& cfg = {}) {
    const SupportShot shot{&features, &mask};
    return build_prototypes(std::span<const SupportShot>(&shot, 1), cfg);
}

struct SimilarityMaps {
    int height = 0;
    int width = 0;
    std::vector<float> fg;
    std::vector<float> bg;
};

namespace detail {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// out[i] = max_k cos(query_i, proto_k) with denominator max(|q||p|, eps).
inline void max_cosine(const Eigen::Map<const RowMatrix>& query, const Eigen::VectorXf& qnorm,
                       const VectorSet& protos, std::vector<float>& out) {
    const Eigen::Index n = static_cast<Eigen::Index>(protos.size());
    Eigen::Map<const RowMatrix> P(protos.data.data(), n, protos.dim);
    const Eigen::VectorXf pnorm = P.rowwise().norm();
    out.assign(static_cast<std::size_t>(query.rows()), -1.0f);

    constexpr Eigen::Index kBlock = 512;
    for (Eigen::Index start = 0; start < n; start += kBlock) {
        const Eigen::Index len = std::min(kBlock, n - start);
        const RowMatrix dots = query * P.middleRows(start, len).transpose();
        for (Eigen::Index i = 0; i < dots.rows(); ++i) {
            float best = out[i];
            for (Eigen::Index k = 0; k < len; ++k) {
                const double denom = std::max(static_cast<double>(qnorm[i]) * pnorm[start + k], kCosineEpsilon);
                const float v = static_cast<float>(dots(i, k) / denom);
                if (v > best) best = v;
            }
            out[i] = best;
        }
    }
    for (auto& v : out) v = std::clamp(v, -1.0f, 1.0f);
}

} // namespace detail

inline SimilarityMaps similarity_maps(const FeatureMap& query, const PrototypeSet& protos) {
    if (query.channels() != protos.dim())
        throw InputError("query has " + std::to_string(query.channels()) + " channels but prototypes have " +
                         std::to_string(protos.dim()));
    const auto q = query.data();
    Eigen::Map<const detail::RowMatrix> Q(q.data(), static_cast<Eigen::Index>(query.cells()), query.channels());
    const Eigen::VectorXf qnorm = Q.rowwise().norm();
    SimilarityMaps s{query.height(), query.width(), {}, {}};
    detail::max_cosine(Q, qnorm, protos.foreground, s.fg);
    detail::max_cosine(Q, qnorm, protos.background, s.bg);
    return s;
}

// Foreground where fg > bg strictly, at feature resolution.
inline BinaryMask decide_cells(const SimilarityMaps& s) {
    BinaryMask m(s.width, s.height);
    for (std::size_t i = 0; i < s.fg.size(); ++i)
        if (s.fg[i] > s.bg[i]) m.set_index(i);
    return m;
}

// Coarse result R0: the cell decision upsampled by nearest-neighbour.
inline BinaryMask decide_mask(const SimilarityMaps& s, int out_width, int out_height) {
    return nearest_resize(decide_cells(s), out_width, out_height);
}

} // namespace fds
