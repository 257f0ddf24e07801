#pragma once

// Core value types shared by every stage of the engine: errors, 8-bit images
// and binary masks.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fds {

inline constexpr const char* kEngineVersion = "0.1.0";

// Bad input or configuration: unreadable files, malformed formats, violated
// preconditions. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failure while processing otherwise valid input. The CLI maps this to exit code 1.
class ProcessingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Warnings go through a replaceable sink (stderr by default); calls are serialized.
using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}
inline WarningSink& warning_sink() {
    static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}
} // namespace detail

inline WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(detail::warning_mutex());
    return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void warn(const std::string& msg) {
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_sink()) detail::warning_sink()(msg);
}

// Interleaved 8-bit image, row-major, `channels` values per pixel.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 0 || h < 0 || c < 0)
            throw InputError("image dimensions must be non-negative");
    }

    bool empty() const noexcept { return width == 0 || height == 0 || channels == 0; }

    std::uint8_t& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    std::uint8_t at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

// Per-pixel {0,1} mask, row-major.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height)
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(checked(width)) * checked(height), 0) {}

    // Takes ownership of `data`; every value must be 0 or 1.
    BinaryMask(int width, int height, std::vector<std::uint8_t> data)
        : width_(checked(width)), height_(checked(height)), data_(std::move(data)) {
        if (data_.size() != static_cast<std::size_t>(width_) * height_)
            throw InputError("mask data size does not match " + std::to_string(width_) + "x" +
                             std::to_string(height_));
        for (auto v : data_)
            if (v > 1) throw InputError("mask values must be 0 or 1");
    }

    // Nonzero source values become foreground.
    static BinaryMask from_nonzero(int width, int height, std::span<const std::uint8_t> values) {
        BinaryMask m(width, height);
        if (values.size() != m.data_.size())
            throw InputError("mask source size does not match dimensions");
        std::transform(values.begin(), values.end(), m.data_.begin(),
                       [](std::uint8_t v) -> std::uint8_t { return v != 0 ? 1 : 0; });
        return m;
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool same_shape(const BinaryMask& o) const noexcept {
        return width_ == o.width_ && height_ == o.height_;
    }

    bool operator()(int row, int col) const {
        return data_[static_cast<std::size_t>(row) * width_ + col] != 0;
    }
    void set(int row, int col, bool v = true) {
        data_[static_cast<std::size_t>(row) * width_ + col] = v ? 1 : 0;
    }
    bool at_index(std::size_t i) const { return data_[i] != 0; }
    void set_index(std::size_t i, bool v = true) { data_[i] = v ? 1 : 0; }

    std::span<const std::uint8_t> values() const noexcept { return data_; }

    std::size_t count() const noexcept {
        return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
    }
    bool any() const noexcept {
        return std::find(data_.begin(), data_.end(), std::uint8_t{1}) != data_.end();
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    static int checked(int v) {
        if (v < 0) throw InputError("mask dimensions must be non-negative");
        return v;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

inline void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (!a.same_shape(b))
        throw InputError(std::string(what) + ": mask dimensions differ (" +
                         std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
}

inline std::size_t intersection_count(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "intersection");
    auto av = a.values();
    auto bv = b.values();
    std::size_t n = 0;
    for (std::size_t i = 0; i < av.size(); ++i) n += av[i] & bv[i];
    return n;
}

inline std::size_t union_count(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "union");
    auto av = a.values();
    auto bv = b.values();
    std::size_t n = 0;
    for (std::size_t i = 0; i < av.size(); ++i) n += av[i] | bv[i];
    return n;
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "union");
    BinaryMask out = a;
    auto bv = b.values();
    for (std::size_t i = 0; i < bv.size(); ++i)
        if (bv[i]) out.set_index(i);
    return out;
}

// a ⊆ b
inline bool is_subset(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a, b, "subset");
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i)
        if (av[i] && !bv[i]) return false;
    return true;
}

} // namespace fds
