#pragma once

// Refinement of the coarse matching result with zero-shot mask proposals.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "fds/core.hpp"
#include "fds/maskops.hpp"

namespace fds {

enum class FusionStrategy { none, sam_only, simple_union, select_retain };

inline const char* to_string(FusionStrategy s) {
    switch (s) {
    case FusionStrategy::none: return "none";
    case FusionStrategy::sam_only: return "sam-only";
    case FusionStrategy::simple_union: return "union";
    case FusionStrategy::select_retain: return "paper";
    }
    return "?";
}

inline FusionStrategy parse_fusion_strategy(std::string_view s) {
    if (s == "none") return FusionStrategy::none;
    if (s == "sam-only" || s == "sam_only") return FusionStrategy::sam_only;
    if (s == "union" || s == "simple_union") return FusionStrategy::simple_union;
    if (s == "paper" || s == "select-retain") return FusionStrategy::select_retain;
    throw InputError("unknown fusion strategy '" + std::string(s) + "' (expected paper, none, sam-only or union)");
}

struct FusionConfig {
    double tau1 = 0.2;   // selection: proposal fraction inside R0 must exceed this
    double tau2 = 0.9;   // a component covered at least this much by a dilated proposal is replaced
    int dilation_k = 21;
    FusionStrategy strategy = FusionStrategy::select_retain;

    void validate() const {
        if (!(tau1 >= 0.0 && tau1 <= 1.0)) throw InputError("tau1 must lie in [0,1]");
        if (!(tau2 >= 0.0 && tau2 <= 1.0)) throw InputError("tau2 must lie in [0,1]");
        if (dilation_k < 1 || dilation_k % 2 == 0) throw InputError("dilation kernel size must be odd and >= 1");
    }
};

namespace detail {

inline void require_proposal_shape(const ProposalSet& props, const BinaryMask& r0, const char* what) {
    if (props.empty()) return;
    if (props.width != r0.width() || props.height != r0.height())
        throw InputError(std::string(what) + ": proposals are " + std::to_string(props.width) + "x" +
                         std::to_string(props.height) + " but R0 is " + std::to_string(r0.width()) + "x" +
                         std::to_string(r0.height()));
}

} // namespace detail

// Indices of proposals whose fraction of pixels inside R0 is strictly above tau1.
inline std::vector<std::size_t> select_mask_indices(const ProposalSet& props, const BinaryMask& r0, double tau1) {
    detail::require_proposal_shape(props, r0, "select_masks");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < props.size(); ++i) {
        const auto& m = props.masks[i];
        const double ratio = static_cast<double>(intersection_count(m, r0)) / static_cast<double>(m.count());
        if (ratio > tau1) keep.push_back(i);
    }
    return keep;
}

inline ProposalSet select_masks(const ProposalSet& props, const BinaryMask& r0, double tau1) {
    ProposalSet out{props.width, props.height, {}, {}, props.pairwise_disjoint};
    for (auto i : select_mask_indices(props, r0, tau1)) {
        out.masks.push_back(props.masks[i]);
        out.confidences.push_back(props.confidences[i]);
    }
    return out;
}

struct RetentionResult {
    ComponentSet components;            // all 8-connected components of R0
    std::vector<std::size_t> retained;  // indices into components
    std::vector<std::size_t> dropped;
};

// A component of R0 is dropped when some single dilated selected mask covers
// at least tau2 of it; otherwise it is retained.
inline RetentionResult retain_components(const BinaryMask& r0, const ProposalSet& selected, double tau2, int dilation_k) {
    detail::require_proposal_shape(selected, r0, "retain_components");
    RetentionResult res{connected_components(r0), {}, {}};
    std::vector<BinaryMask> dilated;
    dilated.reserve(selected.size());
    for (const auto& m : selected.masks) dilated.push_back(dilate(m, dilation_k));

    for (std::size_t l = 0; l < res.components.size(); ++l) {
        const auto& comp = res.components.regions[l];
        bool covered = false;
        for (const auto& d : dilated) {
            std::size_t inside = 0;
            for (auto p : comp.pixels) inside += d.at_index(p);
            if (static_cast<double>(inside) / static_cast<double>(comp.area()) >= tau2) {
                covered = true;
                break;
            }
        }
        (covered ? res.dropped : res.retained).push_back(l);
    }
    return res;
}

struct FusionResult {
    BinaryMask r;
    BinaryMask r_sam;
    ProposalSet selected;
    std::vector<std::size_t> selected_indices;  // into the input proposal set
    RetentionResult retention;
};

inline FusionResult fuse(const BinaryMask& r0, const ProposalSet& props, const FusionConfig& cfg = {}) {
    cfg.validate();
    detail::require_proposal_shape(props, r0, "fuse");
    FusionResult res;
    res.selected_indices = select_mask_indices(props, r0, cfg.tau1);
    res.selected = ProposalSet{r0.width(), r0.height(), {}, {}, props.pairwise_disjoint};
    res.r_sam = BinaryMask(r0.width(), r0.height());
    for (auto i : res.selected_indices) {
        res.selected.masks.push_back(props.masks[i]);
        res.selected.confidences.push_back(props.confidences[i]);
        res.r_sam = mask_union(res.r_sam, props.masks[i]);
    }

    switch (cfg.strategy) {
    case FusionStrategy::none:
        res.r = r0;
        break;
    case FusionStrategy::sam_only:
        res.r = res.r_sam;
        break;
    case FusionStrategy::simple_union:
        res.r = mask_union(r0, res.r_sam);
        break;
    case FusionStrategy::select_retain: {
        res.retention = retain_components(r0, res.selected, cfg.tau2, cfg.dilation_k);
        res.r = res.r_sam;
        for (auto l : res.retention.retained)
            for (auto p : res.retention.components.regions[l].pixels) res.r.set_index(p);
        break;
    }
    }
    return res;
}

} // namespace fds
