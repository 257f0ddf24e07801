#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fds/core.hpp"

namespace fds {

// Dense H' x W' x C' feature tensor, row-major with channel fastest.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int height, int width, int channels)
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(check_dims(height, width, channels)), 0.0f) {}
    FeatureMap(int height, int width, int channels, std::vector<float> data)
        : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
        if (data_.size() != static_cast<std::size_t>(check_dims(height, width, channels)))
            throw InputError("feature data size does not match " + shape_string());
        for (float v : data_)
            if (!std::isfinite(v)) throw InputError("feature map contains a non-finite value");
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    std::size_t cells() const noexcept { return static_cast<std::size_t>(height_) * width_; }

    std::span<const float> cell(int row, int col) const {
        return {data_.data() + (static_cast<std::size_t>(row) * width_ + col) * channels_,
                static_cast<std::size_t>(channels_)};
    }
    std::span<float> cell(int row, int col) {
        return {data_.data() + (static_cast<std::size_t>(row) * width_ + col) * channels_,
                static_cast<std::size_t>(channels_)};
    }
    std::span<const float> cell(std::size_t index) const {
        return {data_.data() + index * channels_, static_cast<std::size_t>(channels_)};
    }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    std::string shape_string() const {
        return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
    }

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    static long long check_dims(int h, int w, int c) {
        if (h < 1 || w < 1 || c < 1) throw InputError("feature map dimensions must be >= 1");
        return static_cast<long long>(h) * w * c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// FMAP container, little-endian:
//   "FMAP" | u32 version=1 | u8 dtype=0 (f32) | u32 H | u32 W | u32 C | f32[H*W*C]

inline constexpr std::array<char, 4> kFeatureMagic{'F', 'M', 'A', 'P'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 4 + 1 + 4 * 3;

namespace detail {

template <typename T>
void put_le(std::vector<char>& out, T v) {
    static_assert(std::is_trivially_copyable_v<T> && (sizeof(T) == 4 || sizeof(T) == 1));
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const char* p) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
}

} // namespace detail

inline std::vector<char> encode_features(const FeatureMap& f) {
    std::vector<char> out(kFeatureMagic.begin(), kFeatureMagic.end());
    out.reserve(kFeatureHeaderBytes + f.data().size() * 4);
    detail::put_le<std::uint32_t>(out, kFeatureVersion);
    detail::put_le<std::uint8_t>(out, 0);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.height()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.width()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.channels()));
    for (float v : f.data()) detail::put_le<float>(out, v);
    return out;
}

struct FeatureHeader {
    std::uint32_t version = 0;
    std::uint8_t dtype = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;
};

inline FeatureHeader decode_feature_header(std::span<const char> bytes) {
    if (bytes.size() < 4 || !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin()))
        throw InputError("not a feature file (bad magic at offset 0)");
    if (bytes.size() < kFeatureHeaderBytes)
        throw InputError("truncated feature header: expected " + std::to_string(kFeatureHeaderBytes) +
                         " bytes, got " + std::to_string(bytes.size()));
    FeatureHeader h;
    h.version = detail::get_le<std::uint32_t>(bytes.data() + 4);
    h.dtype = detail::get_le<std::uint8_t>(bytes.data() + 8);
    h.height = detail::get_le<std::uint32_t>(bytes.data() + 9);
    h.width = detail::get_le<std::uint32_t>(bytes.data() + 13);
    h.channels = detail::get_le<std::uint32_t>(bytes.data() + 17);
    if (h.version != kFeatureVersion)
        throw InputError("unsupported feature file version " + std::to_string(h.version) + " at offset 4");
    if (h.dtype != 0) throw InputError("unsupported feature dtype " + std::to_string(h.dtype) + " at offset 8");
    if (h.height == 0 || h.width == 0 || h.channels == 0)
        throw InputError("feature file declares a zero dimension at offset 9");
    return h;
}

inline FeatureMap decode_features(std::span<const char> bytes) {
    const auto h = decode_feature_header(bytes);
    const std::uint64_t count = static_cast<std::uint64_t>(h.height) * h.width * h.channels;
    const std::uint64_t expected = count * 4;
    const std::uint64_t got = bytes.size() - kFeatureHeaderBytes;
    if (got != expected)
        throw InputError("feature payload at offset " + std::to_string(kFeatureHeaderBytes) + ": expected " +
                         std::to_string(expected) + " bytes, got " + std::to_string(got));
    std::vector<float> data(count);
    const char* p = bytes.data() + kFeatureHeaderBytes;
    for (std::uint64_t i = 0; i < count; ++i) {
        data[i] = detail::get_le<float>(p + i * 4);
        if (!std::isfinite(data[i]))
            throw InputError("non-finite feature value at offset " +
                             std::to_string(kFeatureHeaderBytes + i * 4));
    }
    return FeatureMap(static_cast<int>(h.height), static_cast<int>(h.width), static_cast<int>(h.channels),
                      std::move(data));
}

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void save_features(const FeatureMap& f, const std::filesystem::path& path) {
    const auto bytes = encode_features(f);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("short write to " + path.string());
}

inline FeatureMap load_features(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_features(bytes);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Extractor backends

enum class ExtractorKind { trivial_avgpool, feature_file, portable_model };

struct FeatureShape {
    int height = 0;
    int width = 0;
    int channels = 0;
    friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct ExtractorSpec {
    ExtractorKind kind = ExtractorKind::trivial_avgpool;
    int pool_factor = 4;                  // trivial_avgpool
    std::filesystem::path path;           // model file or feature directory
    std::optional<FeatureShape> expected; // checked against every produced map
    // portable_model input normalisation, applied to RGB scaled to [0,1]
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

inline const char* to_string(ExtractorKind k) {
    switch (k) {
    case ExtractorKind::trivial_avgpool: return "trivial-avgpool";
    case ExtractorKind::feature_file: return "feature-file";
    case ExtractorKind::portable_model: return "portable-model";
    }
    return "?";
}

// `key` identifies the image for backends that look features up rather than
// compute them (the feature-file backend); pixel backends ignore it.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual FeatureMap extract(const Image& img, const std::string& key) = 0;
};

inline void check_declared_shape(const ExtractorSpec& spec, const FeatureMap& f) {
    if (!spec.expected) return;
    const FeatureShape got{f.height(), f.width(), f.channels()};
    if (got != *spec.expected)
        throw InputError("extractor produced " + f.shape_string() + " but the declared shape is " +
                         std::to_string(spec.expected->height) + "x" + std::to_string(spec.expected->width) +
                         "x" + std::to_string(spec.expected->channels));
}

// Non-overlapping factor x factor mean pooling of the raw pixel values. The
// trailing partial window (if the size is not divisible) is dropped.
inline FeatureMap avgpool_features(const Image& img, int factor) {
    if (factor < 1) throw InputError("pool factor must be >= 1");
    if (img.empty()) throw InputError("cannot extract features from an empty image");
    const int oh = img.height / factor;
    const int ow = img.width / factor;
    if (oh < 1 || ow < 1) throw InputError("image smaller than pool factor");
    FeatureMap f(oh, ow, img.channels);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    std::vector<double> acc(img.channels);
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int dr = 0; dr < factor; ++dr)
                for (int dc = 0; dc < factor; ++dc)
                    for (int ch = 0; ch < img.channels; ++ch)
                        acc[ch] += img.at(r * factor + dr, c * factor + dc, ch);
            auto out = f.cell(r, c);
            for (int ch = 0; ch < img.channels; ++ch) out[ch] = static_cast<float>(acc[ch] * inv);
        }
    }
    return f;
}

class AvgPoolExtractor final : public FeatureExtractor {
public:
    explicit AvgPoolExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
        if (spec_.pool_factor < 1) throw InputError("pool factor must be >= 1");
    }
    FeatureMap extract(const Image& img, const std::string&) override {
        auto f = avgpool_features(img, spec_.pool_factor);
        check_declared_shape(spec_, f);
        return f;
    }

private:
    ExtractorSpec spec_;
};

// Loads precomputed FMAP files: <dir>/<key>.fmap, falling back to
// <dir>/<stem>.fmap where stem is the last component of the key.
class FeatureFileExtractor final : public FeatureExtractor {
public:
    explicit FeatureFileExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
        if (!std::filesystem::is_directory(spec_.path))
            throw InputError("feature directory " + spec_.path.string() + " does not exist");
    }
    FeatureMap extract(const Image&, const std::string& key) override {
        const auto p = locate(key);
        auto f = load_features(p);
        check_declared_shape(spec_, f);
        return f;
    }

    std::filesystem::path locate(const std::string& key) const {
        auto full = spec_.path / (key + ".fmap");
        if (std::filesystem::is_regular_file(full)) return full;
        auto flat = spec_.path / (std::filesystem::path(key).filename().string() + ".fmap");
        if (std::filesystem::is_regular_file(flat)) return flat;
        throw InputError("no feature file for " + key + " under " + spec_.path.string());
    }

private:
    ExtractorSpec spec_;
};

} // namespace fds
