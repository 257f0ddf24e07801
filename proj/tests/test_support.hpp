#pragma once

// Synthetic data generators and filesystem helpers shared by the test suites.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "fds/core.hpp"
#include "fds/image_io.hpp"
#include "fds/maskops.hpp"
#include "fds/proposals.hpp"

namespace fds::testing {

class TempDir {
public:
    explicit TempDir(const std::string& tag = "fds") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline BinaryMask mask_from_rows(const std::vector<std::string>& rows) {
    const int h = static_cast<int>(rows.size());
    const int w = h == 0 ? 0 : static_cast<int>(rows.front().size());
    BinaryMask m(w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (rows[r][c] == '1' || rows[r][c] == '#') m.set(r, c);
    return m;
}

inline BinaryMask random_mask(std::mt19937& rng, int w, int h, double density) {
    std::bernoulli_distribution bit(density);
    BinaryMask m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i)
        if (bit(rng)) m.set_index(i);
    return m;
}

// A mask made of a few random rectangles, which gives blob-like structure
// rather than salt-and-pepper noise.
inline BinaryMask random_blobs(std::mt19937& rng, int w, int h, int max_blobs) {
    BinaryMask m(w, h);
    std::uniform_int_distribution<int> nblobs(0, max_blobs);
    const int n = nblobs(rng);
    for (int b = 0; b < n; ++b) {
        std::uniform_int_distribution<int> r0(0, h - 1), c0(0, w - 1);
        const int r = r0(rng), c = c0(rng);
        std::uniform_int_distribution<int> rh(1, std::max(1, h / 2)), cw(1, std::max(1, w / 2));
        const int bh = rh(rng), bw = cw(rng);
        for (int rr = r; rr < std::min(h, r + bh); ++rr)
            for (int cc = c; cc < std::min(w, c + bw); ++cc) m.set(rr, cc);
    }
    return m;
}

inline void fill_rect(BinaryMask& m, int r0, int c0, int h, int w) {
    for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) m.set(r, c);
}

inline constexpr std::array<std::array<std::uint8_t, 3>, 6> kDefectColors{{
    {210, 30, 30}, {30, 200, 40}, {40, 40, 220}, {220, 200, 20}, {200, 30, 200}, {20, 190, 200}}};

enum class Texture { noise, checker };

struct Scene {
    Image image;
    BinaryMask mask;
};

// Near-gray textured background. Checker squares are 2*grid pixels wide.
inline Image textured_background(std::mt19937& rng, int side, int grid, Texture texture) {
    Image img(side, side, 3);
    std::uniform_int_distribution<int> base(90, 160), jitter(-12, 12), noise(-35, 35);
    const int b = base(rng);
    const std::array<int, 3> c1{b + jitter(rng), b + jitter(rng), b + jitter(rng)};
    const std::array<int, 3> c2{b / 2 + jitter(rng), b / 2 + jitter(rng), b / 2 + jitter(rng)};
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                int v;
                if (texture == Texture::noise) {
                    v = c1[ch] + noise(rng);
                } else {
                    const bool odd = ((r / (2 * grid)) + (c / (2 * grid))) % 2 != 0;
                    v = odd ? c2[ch] : c1[ch];
                }
                img.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
            }
        }
    }
    return img;
}

// Textured background with constant-coloured rectangular defects whose edges
// lie on a `grid`-pixel lattice. Background colours are near-gray, defect
// colours saturated, so the two never point in the same colour direction.
inline Scene two_texture_scene(std::mt19937& rng, int side, int grid, Texture texture,
                               std::array<std::uint8_t, 3> defect_color) {
    Scene s{textured_background(rng, side, grid, texture), BinaryMask(side, side)};
    const int cells = side / grid;
    std::uniform_int_distribution<int> nrect(1, 3);
    std::uniform_int_distribution<int> extent(std::max(2, cells / 16), std::max(3, cells / 4));
    const int n = nrect(rng);
    for (int i = 0; i < n; ++i) {
        const int h = extent(rng), w = extent(rng);
        std::uniform_int_distribution<int> rr(0, cells - h), cc(0, cells - w);
        fill_rect(s.mask, rr(rng) * grid, cc(rng) * grid, h * grid, w * grid);
    }
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            if (s.mask(r, c))
                for (int ch = 0; ch < 3; ++ch) s.image.at(r, c, ch) = defect_color[ch];
    return s;
}

struct FixtureClass {
    std::string product;
    std::string name;
    int samples;
    std::array<std::uint8_t, 3> color;
};

// Writes a small benchmark tree with checker backgrounds (every 4x4 pooled
// cell is a pure background colour shared across images of a product) and
// one defect colour per class. With the avgpool(4) extractor the classes are
// perfectly separable. Proposals are written for every other query.
inline void write_fixture_dataset(const std::filesystem::path& root, const std::filesystem::path& proposals_dir,
                                  unsigned seed, const std::vector<FixtureClass>& classes) {
    namespace fs = std::filesystem;
    std::mt19937 rng(seed);
    for (const auto& cls : classes) {
        const auto dir = root / cls.product / cls.name;
        fs::create_directories(dir / "images");
        fs::create_directories(dir / "masks");
        std::mt19937 bg_rng(static_cast<unsigned>(std::hash<std::string>{}(cls.product)) ^ seed);
        const auto bg_seed = bg_rng();
        for (int i = 0; i < cls.samples; ++i) {
            std::mt19937 scene_bg(bg_seed);  // identical background palette per product
            const auto background = textured_background(scene_bg, 256, 4, Texture::checker);
            // re-draw defects with the shared rng so masks vary across samples
            Scene varied = two_texture_scene(rng, 256, 4, Texture::checker, cls.color);
            for (int r = 0; r < 256; ++r)
                for (int c = 0; c < 256; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        varied.image.at(r, c, ch) = varied.mask(r, c) ? cls.color[ch] : background.at(r, c, ch);
            const std::string stem = cls.name + "_" + std::to_string(i);
            write_image(dir / "images" / (stem + ".png"), varied.image);
            write_mask(dir / "masks" / (stem + ".png"), varied.mask);

            if (!proposals_dir.empty() && i % 2 == 0) {
                const auto pdir = proposals_dir / cls.product / cls.name;
                fs::create_directories(pdir);
                ProposalFile pf{256, 256, {}};
                // the exact defect plus an unrelated background blob
                pf.proposals.push_back({varied.mask, 0.8});
                BinaryMask blob(256, 256);
                fill_rect(blob, 0, 0, 8, 8);
                pf.proposals.push_back({blob, 0.4});
                write_proposal_file(pdir / (stem + ".json"), pf);
            }
        }
    }
}

} // namespace fds::testing
