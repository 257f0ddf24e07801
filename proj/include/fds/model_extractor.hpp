#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "fds/core.hpp"
#include "fds/features.hpp"

namespace fds {

// Runs a serialized ONNX graph with OpenCV's dnn module. The graph takes a
// 1x3xHxW float tensor (RGB, scaled to [0,1], then mean/std normalised) and
// returns 1xC'xH'xW'. A cv::dnn::Net is not safe for concurrent forward
// passes, so each worker owns its own instance.
class ModelExtractor final : public FeatureExtractor {
public:
    explicit ModelExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
        if (!std::filesystem::is_regular_file(spec_.path))
            throw InputError("cannot read model file " + spec_.path.string());
        try {
            net_ = cv::dnn::readNetFromONNX(spec_.path.string());
        } catch (const cv::Exception& e) {
            throw InputError("cannot load model " + spec_.path.string() + ": " + e.what());
        }
        if (net_.empty()) throw InputError("cannot load model " + spec_.path.string());
        net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
        net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    }

    FeatureMap extract(const Image& img, const std::string&) override {
        if (img.channels != 3) throw InputError("model extractor expects a 3-channel image");
        const int sizes[] = {1, 3, img.height, img.width};
        cv::Mat blob(4, sizes, CV_32F);
        float* dst = blob.ptr<float>();
        const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
        for (int ch = 0; ch < 3; ++ch) {
            const float mean = spec_.mean[ch];
            const float inv_std = 1.0f / spec_.stddev[ch];
            for (int r = 0; r < img.height; ++r)
                for (int c = 0; c < img.width; ++c)
                    dst[ch * plane + static_cast<std::size_t>(r) * img.width + c] =
                        (img.at(r, c, ch) / 255.0f - mean) * inv_std;
        }

        cv::Mat out;
        try {
            net_.setInput(blob);
            out = net_.forward();
        } catch (const cv::Exception& e) {
            throw ProcessingError("model forward pass failed: " + std::string(e.what()));
        }
        if (out.dims != 4 || out.size[0] != 1)
            throw ProcessingError("model output must be 1xCxHxW, got " + std::to_string(out.dims) + " dims");
        const int channels = out.size[1];
        const int height = out.size[2];
        const int width = out.size[3];
        const std::size_t oplane = static_cast<std::size_t>(height) * width;
        const float* src = out.ptr<float>();

        FeatureMap f(height, width, channels);
        auto data = f.data();
        for (int ch = 0; ch < channels; ++ch)
            for (std::size_t p = 0; p < oplane; ++p) data[p * channels + ch] = src[ch * oplane + p];
        for (float v : data)
            if (!std::isfinite(v)) throw ProcessingError("model produced a non-finite feature value");
        check_declared_shape(spec_, f);
        return f;
    }

private:
    ExtractorSpec spec_;
    cv::dnn::Net net_;
};

inline std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec) {
    switch (spec.kind) {
    case ExtractorKind::trivial_avgpool: return std::make_unique<AvgPoolExtractor>(spec);
    case ExtractorKind::feature_file: return std::make_unique<FeatureFileExtractor>(spec);
    case ExtractorKind::portable_model: return std::make_unique<ModelExtractor>(spec);
    }
    throw InputError("unknown extractor kind");
}

} // namespace fds
