#pragma once

// Benchmark ingestion, episode construction and resizing.
//
// Layout on disk:
//   <root>/<product>/<class>/images/<stem>.{png,jpg,jpeg}
//   <root>/<product>/<class>/masks/<stem>.png
// Masks are 8-bit single-channel images, nonzero = foreground.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fds/core.hpp"
#include "fds/image_io.hpp"
#include "fds/maskops.hpp"

namespace fds {

namespace fs = std::filesystem;

struct SamplePath {
    fs::path image;
    fs::path mask;

    std::string stem() const { return image.stem().string(); }
    friend bool operator==(const SamplePath&, const SamplePath&) = default;
};

struct ClassId {
    std::string product;
    std::string name;

    std::string key() const { return product + "/" + name; }
    friend auto operator<=>(const ClassId&, const ClassId&) = default;
};

struct DefectClassEntry {
    std::string name;
    std::vector<SamplePath> samples;

    friend bool operator==(const DefectClassEntry&, const DefectClassEntry&) = default;
};

struct ProductEntry {
    std::string name;
    std::vector<DefectClassEntry> classes;

    friend bool operator==(const ProductEntry&, const ProductEntry&) = default;
};

struct DatasetIndex {
    fs::path root;
    std::vector<ProductEntry> products;

    const DefectClassEntry& find(const ClassId& id) const {
        for (const auto& p : products)
            if (p.name == id.product)
                for (const auto& c : p.classes)
                    if (c.name == id.name) return c;
        throw InputError("unknown class " + id.key());
    }

    std::vector<ClassId> class_ids() const {
        std::vector<ClassId> ids;
        for (const auto& p : products)
            for (const auto& c : p.classes) ids.push_back({p.name, c.name});
        return ids;
    }

    std::size_t quantity(const ClassId& id) const { return find(id).samples.size(); }

    friend bool operator==(const DatasetIndex&, const DatasetIndex&) = default;
};

// Returns (width, height) of an image file.
using SizeProbe = std::function<std::pair<int, int>(const fs::path&)>;

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline bool is_hidden(const fs::path& p) {
    const auto name = p.filename().string();
    return !name.empty() && name.front() == '.';
}

inline std::vector<fs::path> sorted_entries(const fs::path& dir, bool want_dirs) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (is_hidden(e.path())) continue;
        if (want_dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return out;
}

inline DefectClassEntry scan_class(const fs::path& class_dir, const SizeProbe& probe) {
    const fs::path images = class_dir / "images";
    const fs::path masks = class_dir / "masks";
    DefectClassEntry entry{class_dir.filename().string(), {}};
    if (!fs::is_directory(images)) throw InputError("class folder " + class_dir.string() + " has no images/ directory");

    for (const auto& img : sorted_entries(images, false)) {
        const auto ext = lower(img.extension().string());
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
        const fs::path mask = masks / (img.stem().string() + ".png");
        if (!fs::is_regular_file(mask))
            throw InputError("missing mask for image " + img.string() + " (expected " + mask.string() + ")");
        const auto img_size = probe(img);
        const auto mask_size = probe(mask);
        if (img_size != mask_size)
            throw InputError("mask " + mask.string() + " is " + std::to_string(mask_size.first) + "x" +
                             std::to_string(mask_size.second) + " but image is " +
                             std::to_string(img_size.first) + "x" + std::to_string(img_size.second));
        entry.samples.push_back({img, mask});
    }
    if (entry.samples.empty()) throw InputError("class folder " + class_dir.string() + " contains no images");
    return entry;
}

} // namespace detail

inline DatasetIndex scan_dataset(const fs::path& root, const SizeProbe& probe = read_image_size) {
    if (!fs::is_directory(root)) throw InputError("dataset root " + root.string() + " is not a directory");
    DatasetIndex index{root, {}};
    for (const auto& product_dir : detail::sorted_entries(root, true)) {
        ProductEntry product{product_dir.filename().string(), {}};
        for (const auto& class_dir : detail::sorted_entries(product_dir, true))
            product.classes.push_back(detail::scan_class(class_dir, probe));
        if (!product.classes.empty()) index.products.push_back(std::move(product));
    }
    if (index.products.empty()) throw InputError("no products found under " + root.string());
    return index;
}

// Reads a class list: one `product/class` (or bare `product`) per line. Blank
// lines and lines starting with '#' are ignored.
inline std::vector<std::string> read_class_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read class list " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        std::size_t b = 0;
        while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
        line = line.substr(b);
        if (line.empty() || line.front() == '#') continue;
        out.push_back(line);
    }
    return out;
}

// Filters are `product` or `product/class`; an empty filter selects everything.
inline std::vector<ClassId> select_classes(const DatasetIndex& index, const std::vector<std::string>& filters) {
    std::vector<ClassId> out;
    for (const auto& id : index.class_ids()) {
        if (filters.empty()) {
            out.push_back(id);
            continue;
        }
        for (const auto& f : filters) {
            if (f == id.product || f == id.key()) {
                out.push_back(id);
                break;
            }
        }
    }
    if (out.empty()) throw InputError("no classes selected");
    return out;
}

struct Episode {
    ClassId class_id;
    std::vector<SamplePath> supports;
    SamplePath query;
};

// Cyclic leave-one-out over the name-sorted samples: sample i is the query of
// episode i and its supports are samples i+1 .. i+shots (mod n).
inline std::vector<Episode> build_episodes(const DatasetIndex& index, const ClassId& id, int shots) {
    if (shots < 1) throw InputError("shots must be >= 1");
    const auto& samples = index.find(id).samples;
    const std::size_t n = samples.size();
    if (n < static_cast<std::size_t>(shots) + 1)
        throw InputError("class too small for " + std::to_string(shots) + "-shot: " + id.key() + " has " +
                         std::to_string(n) + " samples");
    std::vector<Episode> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Episode ep{id, {}, samples[i]};
        for (int s = 1; s <= shots; ++s) ep.supports.push_back(samples[(i + s) % n]);
        out.push_back(std::move(ep));
    }
    return out;
}

namespace detail {

// Half-pixel-centred source coordinate for bilinear resampling.
struct LinearTap {
    int lo;
    int hi;
    double frac;
};

inline LinearTap linear_tap(int dst, int dst_size, int src_size) {
    const double scale = static_cast<double>(src_size) / dst_size;
    double s = (dst + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    int lo = static_cast<int>(std::floor(s));
    if (lo > src_size - 1) lo = src_size - 1;
    const int hi = std::min(lo + 1, src_size - 1);
    return {lo, hi, s - lo};
}

inline int nearest_index(int dst, int dst_size, int src_size) {
    return static_cast<int>(std::min<long long>(static_cast<long long>(dst) * src_size / dst_size, src_size - 1));
}

} // namespace detail

// Bilinear resize (half-pixel centres) to an arbitrary size; channels preserved.
inline Image resize_image(const Image& img, int out_width, int out_height) {
    if (img.empty()) throw InputError("cannot resize an empty image");
    if (out_width < 1 || out_height < 1) throw InputError("resize target must be at least 1x1");
    if (img.width == out_width && img.height == out_height) return img;

    std::vector<detail::LinearTap> xs(out_width), ys(out_height);
    for (int c = 0; c < out_width; ++c) xs[c] = detail::linear_tap(c, out_width, img.width);
    for (int r = 0; r < out_height; ++r) ys[r] = detail::linear_tap(r, out_height, img.height);

    Image out(out_width, out_height, img.channels);
    for (int r = 0; r < out_height; ++r) {
        const auto& ty = ys[r];
        for (int c = 0; c < out_width; ++c) {
            const auto& tx = xs[c];
            for (int ch = 0; ch < img.channels; ++ch) {
                const double top = img.at(ty.lo, tx.lo, ch) * (1.0 - tx.frac) + img.at(ty.lo, tx.hi, ch) * tx.frac;
                const double bot = img.at(ty.hi, tx.lo, ch) * (1.0 - tx.frac) + img.at(ty.hi, tx.hi, ch) * tx.frac;
                const double v = top * (1.0 - ty.frac) + bot * ty.frac;
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

inline Image resize_image(const Image& img, int side = 256) { return resize_image(img, side, side); }

inline BinaryMask bilinear_threshold_resize(const BinaryMask& mask, int out_width, int out_height,
                                            double threshold = 0.5) {
    std::vector<detail::LinearTap> xs(out_width), ys(out_height);
    for (int c = 0; c < out_width; ++c) xs[c] = detail::linear_tap(c, out_width, mask.width());
    for (int r = 0; r < out_height; ++r) ys[r] = detail::linear_tap(r, out_height, mask.height());
    BinaryMask out(out_width, out_height);
    for (int r = 0; r < out_height; ++r) {
        const auto& ty = ys[r];
        for (int c = 0; c < out_width; ++c) {
            const auto& tx = xs[c];
            const double top = mask(ty.lo, tx.lo) * (1.0 - tx.frac) + mask(ty.lo, tx.hi) * tx.frac;
            const double bot = mask(ty.hi, tx.lo) * (1.0 - tx.frac) + mask(ty.hi, tx.hi) * tx.frac;
            if (top * (1.0 - ty.frac) + bot * ty.frac >= threshold) out.set(r, c);
        }
    }
    return out;
}

// Nearest-neighbour resize, source index floor(dst * src / dst_size).
inline BinaryMask nearest_resize(const BinaryMask& mask, int out_width, int out_height) {
    BinaryMask out(out_width, out_height);
    for (int r = 0; r < out_height; ++r) {
        const int sr = detail::nearest_index(r, out_height, mask.height());
        for (int c = 0; c < out_width; ++c)
            if (mask(sr, detail::nearest_index(c, out_width, mask.width()))) out.set(r, c);
    }
    return out;
}

// Which stage of downsample_mask produced the result.
enum class DownsampleStage { bilinear, nearest, centroid };

struct DownsampleResult {
    BinaryMask mask;
    DownsampleStage stage = DownsampleStage::bilinear;
};

// Shrinks a mask without ever losing a nonempty foreground: bilinear +
// threshold 0.5 first, nearest-neighbour if that comes out empty, and finally
// one cell per 8-connected input component at the component's centroid.
inline DownsampleResult downsample_mask_traced(const BinaryMask& mask, int out_width, int out_height) {
    if (out_width < 1 || out_height < 1) throw InputError("downsample target must be at least 1x1");
    if (out_width > mask.width() || out_height > mask.height())
        throw InputError("downsample target " + std::to_string(out_width) + "x" + std::to_string(out_height) +
                         " exceeds source " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()));

    DownsampleResult res{bilinear_threshold_resize(mask, out_width, out_height), DownsampleStage::bilinear};
    if (res.mask.any() || !mask.any()) return res;

    res = {nearest_resize(mask, out_width, out_height), DownsampleStage::nearest};
    if (res.mask.any()) return res;

    res.stage = DownsampleStage::centroid;
    const auto comps = connected_components(mask);
    const double sy = static_cast<double>(out_height) / mask.height();
    const double sx = static_cast<double>(out_width) / mask.width();
    for (const auto& comp : comps.regions) {
        double mr = 0.0, mc = 0.0;
        for (auto p : comp.pixels) {
            mr += static_cast<double>(p / mask.width()) + 0.5;
            mc += static_cast<double>(p % mask.width()) + 0.5;
        }
        mr /= static_cast<double>(comp.area());
        mc /= static_cast<double>(comp.area());
        const int r = std::min(static_cast<int>(std::floor(mr * sy)), out_height - 1);
        const int c = std::min(static_cast<int>(std::floor(mc * sx)), out_width - 1);
        res.mask.set(r, c);
    }
    return res;
}

inline BinaryMask downsample_mask(const BinaryMask& mask, int out_width, int out_height) {
    return downsample_mask_traced(mask, out_width, out_height).mask;
}

// Resizes a ground-truth or support mask to the working resolution. Shrinking
// goes through downsample_mask so small defects survive; any enlargement uses
// nearest-neighbour.
inline BinaryMask resize_mask(const BinaryMask& mask, int out_width, int out_height) {
    if (mask.width() == out_width && mask.height() == out_height) return mask;
    if (out_width <= mask.width() && out_height <= mask.height())
        return downsample_mask(mask, out_width, out_height);
    return nearest_resize(mask, out_width, out_height);
}

// An image/mask pair loaded from disk and brought to the working resolution.
struct LoadedSample {
    Image image;
    BinaryMask mask;
    std::string key;  // <product>/<class>/<stem>, or the bare stem outside a dataset
};

inline LoadedSample load_sample(const SamplePath& sp, int side, std::string key) {
    Image img = read_image(sp.image);
    BinaryMask mask = read_mask(sp.mask);
    if (img.width != mask.width() || img.height != mask.height())
        throw InputError("mask " + sp.mask.string() + " does not match image dimensions");
    return {resize_image(img, side), resize_mask(mask, side, side), std::move(key)};
}

} // namespace fds
