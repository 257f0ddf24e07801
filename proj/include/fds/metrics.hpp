#pragma once

// IoU, class-aggregated mIoU and per-product FB-IoU. Per-class IoU is the
// ratio of intersection and union counts accumulated over all episodes of the
// class, not a mean of per-episode ratios.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "fds/core.hpp"

namespace fds {

// 1.0 when both masks are empty.
inline double iou(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt, "iou");
    const auto u = union_count(pred, gt);
    if (u == 0) return 1.0;
    return static_cast<double>(intersection_count(pred, gt)) / static_cast<double>(u);
}

struct IouCounts {
    std::uint64_t intersection = 0;
    std::uint64_t unions = 0;

    double ratio() const noexcept {
        return unions == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(unions);
    }
    IouCounts& operator+=(const IouCounts& o) noexcept {
        intersection += o.intersection;
        unions += o.unions;
        return *this;
    }
    friend bool operator==(const IouCounts&, const IouCounts&) = default;
};

struct ProductCounts {
    IouCounts foreground;
    IouCounts background;

    ProductCounts& operator+=(const ProductCounts& o) noexcept {
        foreground += o.foreground;
        background += o.background;
        return *this;
    }
    friend bool operator==(const ProductCounts&, const ProductCounts&) = default;
};

enum class FbIouMode { per_product, pooled };

inline FbIouMode parse_fbiou_mode(std::string_view s) {
    if (s == "per-product") return FbIouMode::per_product;
    if (s == "pooled") return FbIouMode::pooled;
    throw InputError("unknown FB-IoU mode '" + std::string(s) + "' (expected per-product or pooled)");
}

inline const char* to_string(FbIouMode m) { return m == FbIouMode::pooled ? "pooled" : "per-product"; }

struct MetricReport {
    std::map<std::string, double> class_iou;     // key "product/class"
    std::map<std::string, double> product_fbiou;
    double miou = 0.0;
    double mean_fbiou = 0.0;     // mean over products (default) or pooled, per mode
    double pooled_fbiou = 0.0;   // from counts pooled over all products
};

class MetricLedger {
public:
    // Adds one episode. Returns true if both masks were empty.
    bool accumulate(const std::string& product, const std::string& cls, const BinaryMask& pred, const BinaryMask& gt) {
        require_same_shape(pred, gt, "accumulate");
        const auto inter = intersection_count(pred, gt);
        const auto uni = union_count(pred, gt);
        const auto total = static_cast<std::uint64_t>(pred.size());
        // background: complement of each mask
        const auto bg_inter = total - uni;
        const auto bg_union = total - inter;

        classes_[product + "/" + cls] += IouCounts{inter, uni};
        products_[product] += ProductCounts{{inter, uni}, {bg_inter, bg_union}};
        ++episodes_;
        if (uni == 0) {
            ++both_empty_;
            return true;
        }
        return false;
    }

    void merge(const MetricLedger& o) {
        for (const auto& [k, v] : o.classes_) classes_[k] += v;
        for (const auto& [k, v] : o.products_) products_[k] += v;
        episodes_ += o.episodes_;
        both_empty_ += o.both_empty_;
    }

    bool empty() const noexcept { return episodes_ == 0; }
    std::uint64_t episodes() const noexcept { return episodes_; }
    std::uint64_t both_empty() const noexcept { return both_empty_; }
    const std::map<std::string, IouCounts>& classes() const noexcept { return classes_; }
    const std::map<std::string, ProductCounts>& products() const noexcept { return products_; }

    MetricReport report(FbIouMode mode = FbIouMode::per_product) const {
        if (empty()) throw ProcessingError("cannot report on an empty metric ledger");
        MetricReport r;
        double sum = 0.0;
        for (const auto& [k, v] : classes_) {
            r.class_iou[k] = v.ratio();
            sum += v.ratio();
        }
        r.miou = sum / static_cast<double>(classes_.size());

        double fb_sum = 0.0;
        ProductCounts pooled;
        for (const auto& [k, v] : products_) {
            const double fb = 0.5 * (v.foreground.ratio() + v.background.ratio());
            r.product_fbiou[k] = fb;
            fb_sum += fb;
            pooled += v;
        }
        r.pooled_fbiou = 0.5 * (pooled.foreground.ratio() + pooled.background.ratio());
        r.mean_fbiou = mode == FbIouMode::pooled ? r.pooled_fbiou : fb_sum / static_cast<double>(products_.size());
        return r;
    }

    friend bool operator==(const MetricLedger&, const MetricLedger&) = default;

private:
    std::map<std::string, IouCounts> classes_;
    std::map<std::string, ProductCounts> products_;
    std::uint64_t episodes_ = 0;
    std::uint64_t both_empty_ = 0;
};

} // namespace fds
