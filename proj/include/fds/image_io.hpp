#pragma once

// File I/O for images and masks. Decoding and encoding go through OpenCV;
// everything downstream works on fds::Image / fds::BinaryMask.

#include <cstring>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fds/core.hpp"

namespace fds {

// Loads an image as 3-channel RGB.
inline Image read_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw InputError("cannot read image " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image img(rgb.cols, rgb.rows, 3);
    for (int r = 0; r < rgb.rows; ++r)
        std::memcpy(&img.at(r, 0, 0), rgb.ptr<std::uint8_t>(r), static_cast<std::size_t>(rgb.cols) * 3);
    return img;
}

// Loads a single-channel 8-bit mask; nonzero is foreground.
inline BinaryMask read_mask(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw InputError("cannot read mask " + path.string());
    BinaryMask out(m.cols, m.rows);
    for (int r = 0; r < m.rows; ++r) {
        const auto* row = m.ptr<std::uint8_t>(r);
        for (int c = 0; c < m.cols; ++c)
            if (row[c] != 0) out.set(r, c);
    }
    return out;
}

// Width and height of an image file.
inline std::pair<int, int> read_image_size(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw InputError("cannot read image " + path.string());
    return {m.cols, m.rows};
}

inline void write_image(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw InputError("write_image supports 1 or 3 channels");
    cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1,
              const_cast<std::uint8_t*>(img.data.data()));
    cv::Mat out;
    if (img.channels == 3)
        cv::cvtColor(m, out, cv::COLOR_RGB2BGR);
    else
        out = m;
    if (!cv::imwrite(path.string(), out)) throw InputError("cannot write image " + path.string());
}

// Foreground is written as 255.
inline void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    Image img(mask.width(), mask.height(), 1);
    auto v = mask.values();
    for (std::size_t i = 0; i < v.size(); ++i) img.data[i] = v[i] ? 255 : 0;
    write_image(path, img);
}

} // namespace fds
