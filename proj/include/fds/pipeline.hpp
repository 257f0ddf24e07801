#pragma once

// End-to-end segmentation of one episode and the benchmark driver.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fds/core.hpp"
#include "fds/dataset.hpp"
#include "fds/features.hpp"
#include "fds/fusion.hpp"
#include "fds/image_io.hpp"
#include "fds/maskops.hpp"
#include "fds/matching.hpp"
#include "fds/metrics.hpp"
#include "fds/model_extractor.hpp"
#include "fds/proposals.hpp"

namespace fds {

struct PipelineConfig {
    int image_side = 256;
    PrototypeConfig prototypes;
    FusionConfig fusion;
};

struct EpisodeTimings {
    double extract_ms = 0.0;
    double match_ms = 0.0;
    double fuse_ms = 0.0;
    double total_ms = 0.0;
};

struct SegmentationOutput {
    BinaryMask r0;
    BinaryMask r;
    FusionResult fusion;
    SimilarityMaps similarity;
    EpisodeTimings timings;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

} // namespace detail

// Segments `query` given support samples already at working resolution.
inline SegmentationOutput segment(std::span<const LoadedSample> supports, const Image& query,
                                  const std::string& query_key, const ProposalSet& proposals,
                                  const PipelineConfig& cfg, FeatureExtractor& extractor) {
    if (supports.empty()) throw InputError("at least one support sample is required");
    SegmentationOutput out;
    const auto t0 = detail::Clock::now();

    std::vector<FeatureMap> support_features;
    std::vector<BinaryMask> support_masks;
    support_features.reserve(supports.size());
    support_masks.reserve(supports.size());
    for (const auto& s : supports) {
        if (!s.mask.any()) throw InputError("support " + s.key + " has an empty mask");
        support_features.push_back(extractor.extract(s.image, s.key));
        const auto& f = support_features.back();
        if (f.width() > s.mask.width() || f.height() > s.mask.height())
            throw InputError("feature grid " + f.shape_string() + " is larger than support mask of " + s.key);
        support_masks.push_back(downsample_mask(s.mask, f.width(), f.height()));
    }
    const FeatureMap query_features = extractor.extract(query, query_key);
    out.timings.extract_ms = detail::elapsed_ms(t0);

    const auto t1 = detail::Clock::now();
    std::vector<SupportShot> shots;
    for (std::size_t i = 0; i < supports.size(); ++i) shots.push_back({&support_features[i], &support_masks[i]});
    const auto protos = build_prototypes(shots, cfg.prototypes);
    out.similarity = similarity_maps(query_features, protos);
    out.r0 = decide_mask(out.similarity, query.width, query.height);
    out.timings.match_ms = detail::elapsed_ms(t1);

    const auto t2 = detail::Clock::now();
    out.fusion = fuse(out.r0, proposals, cfg.fusion);
    out.r = out.fusion.r;
    out.timings.fuse_ms = detail::elapsed_ms(t2);
    out.timings.total_ms = detail::elapsed_ms(t0);
    return out;
}

// Reads raw proposals for `key` from <dir>/<key>.json, falling back to
// <dir>/<stem>.json; resizes them (nearest) to the working resolution and
// de-overlaps. A missing file yields an empty set and a warning.
inline ProposalSet load_proposals(const std::filesystem::path& dir, const std::string& key, int width, int height) {
    namespace fs = std::filesystem;
    fs::path path = dir / (key + ".json");
    if (!fs::is_regular_file(path)) path = dir / (fs::path(key).filename().string() + ".json");
    if (!fs::is_regular_file(path)) {
        warn("no proposal file for " + key + " under " + dir.string() + "; using an empty proposal set");
        ProposalSet empty;
        empty.width = width;
        empty.height = height;
        empty.pairwise_disjoint = true;
        return empty;
    }
    auto file = read_proposal_file(path);
    if (file.width != width || file.height != height)
        for (auto& p : file.proposals) p.mask = nearest_resize(p.mask, width, height);
    auto set = deoverlap(file.proposals);
    set.width = width;
    set.height = height;
    return set;
}

// Query image tinted red where `mask` is foreground.
inline Image overlay(const Image& img, const BinaryMask& mask) {
    if (img.width != mask.width() || img.height != mask.height())
        throw InputError("overlay: image and mask dimensions differ");
    Image out(img.width, img.height, 3);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                const int v = img.at(r, c, img.channels == 3 ? ch : 0);
                const int tint = ch == 0 ? 255 : 0;
                out.at(r, c, ch) = static_cast<std::uint8_t>(mask(r, c) ? (v + tint + 1) / 2 : v);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run configuration and report

struct RunConfig {
    std::filesystem::path root;
    std::vector<std::string> classes;  // filters: product or product/class
    int shots = 1;
    ExtractorSpec extractor;
    std::optional<std::filesystem::path> proposals_dir;
    PipelineConfig pipeline;
    std::optional<std::filesystem::path> out_dir;
    int workers = 1;
    FbIouMode fbiou_mode = FbIouMode::per_product;

    void validate() const {
        if (shots < 1) throw InputError("--shots must be >= 1");
        if (workers < 1) throw InputError("--workers must be >= 1");
        if (pipeline.image_side < 1) throw InputError("image side must be >= 1");
        pipeline.fusion.validate();
        if (pipeline.prototypes.patch_size < 1 || pipeline.prototypes.patch_size % 2 == 0)
            throw InputError("--patch must be odd and >= 1");
        if (proposals_dir && !std::filesystem::is_directory(*proposals_dir))
            throw InputError("proposal directory " + proposals_dir->string() + " does not exist");
    }
};

// Settings that determine results. Worker count and output location are not
// part of it: they never change the report payload.
inline nlohmann::json config_echo(const RunConfig& cfg) {
    nlohmann::json extractor = {{"kind", to_string(cfg.extractor.kind)}};
    if (cfg.extractor.kind == ExtractorKind::trivial_avgpool)
        extractor["pool_factor"] = cfg.extractor.pool_factor;
    else
        extractor["path"] = cfg.extractor.path.string();
    return {
        {"root", cfg.root.string()},
        {"classes", cfg.classes},
        {"shots", cfg.shots},
        {"image_side", cfg.pipeline.image_side},
        {"extractor", extractor},
        {"prototypes",
         {{"fg_strategy", to_string(cfg.pipeline.prototypes.fg_strategy)},
          {"bg_strategy", to_string(cfg.pipeline.prototypes.bg_strategy)},
          {"patch_size", cfg.pipeline.prototypes.patch_size},
          {"patch_stride", 1}}},
        {"fusion",
         {{"strategy", to_string(cfg.pipeline.fusion.strategy)},
          {"tau1", cfg.pipeline.fusion.tau1},
          {"tau2", cfg.pipeline.fusion.tau2},
          {"dilation_k", cfg.pipeline.fusion.dilation_k}}},
        {"proposals_dir", cfg.proposals_dir ? nlohmann::json(cfg.proposals_dir->string()) : nlohmann::json(nullptr)},
        {"fbiou_mode", to_string(cfg.fbiou_mode)},
    };
}

struct EpisodeRecord {
    std::string class_key;
    std::string query;
    std::vector<std::string> supports;
    double iou = 0.0;
    double iou_coarse = 0.0;
    std::size_t proposals = 0;
    std::size_t selected = 0;
    EpisodeTimings timings;
};

struct BenchmarkResult {
    MetricLedger ledger;
    MetricLedger coarse_ledger;
    std::vector<EpisodeRecord> episodes;
    nlohmann::json report;
};

// Everything in a report except the "nondeterministic" section is a pure
// function of the inputs and the config echo.
inline nlohmann::json deterministic_payload(nlohmann::json report) {
    report.erase("nondeterministic");
    return report;
}

namespace detail {

inline std::string sample_key(const ClassId& id, const SamplePath& sp) {
    return id.product + "/" + id.name + "/" + sp.stem();
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline nlohmann::json metrics_json(const MetricReport& r, FbIouMode mode) {
    return {{"miou", r.miou},
            {"mean_fbiou", r.mean_fbiou},
            {"fbiou_mode", to_string(mode)},
            {"pooled_fbiou", r.pooled_fbiou},
            {"class_iou", r.class_iou},
            {"product_fbiou", r.product_fbiou}};
}

} // namespace detail

inline BenchmarkResult run_benchmark(const RunConfig& cfg) {
    cfg.validate();
    const auto index = scan_dataset(cfg.root);
    const auto classes = select_classes(index, cfg.classes);
    std::vector<Episode> episodes;
    for (const auto& id : classes) {
        auto eps = build_episodes(index, id, cfg.shots);
        episodes.insert(episodes.end(), std::make_move_iterator(eps.begin()), std::make_move_iterator(eps.end()));
    }
    if (episodes.empty()) throw InputError("zero episodes selected");

    const auto start = detail::Clock::now();
    const int nworkers = static_cast<int>(std::min<std::size_t>(cfg.workers, episodes.size()));
    BenchmarkResult result;
    result.episodes.resize(episodes.size());
    std::vector<MetricLedger> ledgers(nworkers), coarse(nworkers);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    const int side = cfg.pipeline.image_side;

    auto work = [&](int w) {
        try {
            auto extractor = make_extractor(cfg.extractor);
            for (std::size_t i = next++; i < episodes.size() && !failed; i = next++) {
                const auto& ep = episodes[i];
                const auto qkey = detail::sample_key(ep.class_id, ep.query);
                try {
                    std::vector<LoadedSample> supports;
                    for (const auto& s : ep.supports)
                        supports.push_back(load_sample(s, side, detail::sample_key(ep.class_id, s)));
                    const auto query = load_sample(ep.query, side, qkey);
                    ProposalSet props;
                    props.width = props.height = side;
                    props.pairwise_disjoint = true;
                    if (cfg.proposals_dir) props = load_proposals(*cfg.proposals_dir, qkey, side, side);

                    const auto seg = segment(supports, query.image, qkey, props, cfg.pipeline, *extractor);
                    if (ledgers[w].accumulate(ep.class_id.product, ep.class_id.name, seg.r, query.mask))
                        warn("episode " + qkey + ": prediction and ground truth both empty, IoU taken as 1");
                    coarse[w].accumulate(ep.class_id.product, ep.class_id.name, seg.r0, query.mask);

                    auto& rec = result.episodes[i];
                    rec.class_key = ep.class_id.key();
                    rec.query = ep.query.stem();
                    for (const auto& s : ep.supports) rec.supports.push_back(s.stem());
                    rec.iou = iou(seg.r, query.mask);
                    rec.iou_coarse = iou(seg.r0, query.mask);
                    rec.proposals = props.size();
                    rec.selected = seg.fusion.selected_indices.size();
                    rec.timings = seg.timings;
                } catch (const InputError& e) {
                    throw InputError("episode " + qkey + ": " + e.what());
                } catch (const std::exception& e) {
                    throw ProcessingError("episode " + qkey + ": " + e.what());
                }
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
        }
    };

    if (nworkers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < nworkers; ++w) pool.emplace_back(work, w);
    }
    if (error) std::rethrow_exception(error);

    for (const auto& l : ledgers) result.ledger.merge(l);
    for (const auto& l : coarse) result.coarse_ledger.merge(l);
    const auto final_report = result.ledger.report(cfg.fbiou_mode);
    const auto coarse_report = result.coarse_ledger.report(cfg.fbiou_mode);

    nlohmann::json eps = nlohmann::json::array();
    double tmin = 0.0, tmax = 0.0, tsum = 0.0;
    for (std::size_t i = 0; i < result.episodes.size(); ++i) {
        const auto& r = result.episodes[i];
        eps.push_back({{"class", r.class_key},
                       {"query", r.query},
                       {"supports", r.supports},
                       {"iou", r.iou},
                       {"iou_coarse", r.iou_coarse},
                       {"proposals", r.proposals},
                       {"selected", r.selected}});
        const double t = r.timings.total_ms;
        tmin = i == 0 ? t : std::min(tmin, t);
        tmax = i == 0 ? t : std::max(tmax, t);
        tsum += t;
    }
    const double mean_ms = tsum / static_cast<double>(result.episodes.size());

    result.report = {
        {"engine", {{"name", "fds"}, {"version", kEngineVersion}}},
        {"config", config_echo(cfg)},
        {"counts",
         {{"episodes", result.ledger.episodes()},
          {"classes", result.ledger.classes().size()},
          {"products", result.ledger.products().size()},
          {"both_empty", result.ledger.both_empty()}}},
        {"metrics", detail::metrics_json(final_report, cfg.fbiou_mode)},
        {"coarse_metrics", detail::metrics_json(coarse_report, cfg.fbiou_mode)},
        {"episodes", std::move(eps)},
        {"nondeterministic",
         {{"timestamp", detail::utc_timestamp()},
          {"workers", nworkers},
          {"wall_ms", detail::elapsed_ms(start)},
          {"episode_ms", {{"mean", mean_ms}, {"min", tmin}, {"max", tmax}}},
          {"fps", mean_ms > 0.0 ? 1000.0 / mean_ms : 0.0}}},
    };

    if (cfg.out_dir) {
        std::filesystem::create_directories(*cfg.out_dir);
        const auto path = *cfg.out_dir / "report.json";
        std::ofstream out(path);
        if (!out) throw InputError("cannot write " + path.string());
        out << result.report.dump(2) << '\n';
    }
    return result;
}

// ---------------------------------------------------------------------------
// Single episode from explicit files

struct EpisodeFiles {
    std::vector<SamplePath> supports;
    std::filesystem::path query_image;
    std::optional<std::filesystem::path> query_mask;
    std::optional<std::filesystem::path> proposals_file;
};

struct EpisodeOutcome {
    SegmentationOutput segmentation;
    std::optional<double> iou;
    std::optional<double> iou_coarse;
    nlohmann::json record;
};

// Writes overlay.png, r0.png, r.png and episode.json into cfg.out_dir when set.
inline EpisodeOutcome run_episode(const RunConfig& cfg, const EpisodeFiles& files) {
    cfg.validate();
    if (files.supports.empty()) throw InputError("at least one support (image, mask) pair is required");
    const int side = cfg.pipeline.image_side;
    auto extractor = make_extractor(cfg.extractor);

    std::vector<LoadedSample> supports;
    for (const auto& s : files.supports) supports.push_back(load_sample(s, side, s.stem()));
    const std::string qkey = files.query_image.stem().string();
    const Image query = resize_image(read_image(files.query_image), side);
    std::optional<BinaryMask> gt;
    if (files.query_mask) {
        auto m = read_mask(*files.query_mask);
        gt = resize_mask(m, side, side);
    }

    ProposalSet props;
    props.width = props.height = side;
    props.pairwise_disjoint = true;
    if (files.proposals_file) {
        auto file = read_proposal_file(*files.proposals_file);
        if (file.width != side || file.height != side)
            for (auto& p : file.proposals) p.mask = nearest_resize(p.mask, side, side);
        props = deoverlap(file.proposals);
        props.width = props.height = side;
    } else if (cfg.proposals_dir) {
        props = load_proposals(*cfg.proposals_dir, qkey, side, side);
    }

    EpisodeOutcome out;
    out.segmentation = segment(supports, query, qkey, props, cfg.pipeline, *extractor);
    const auto& seg = out.segmentation;
    if (gt) {
        out.iou = iou(seg.r, *gt);
        out.iou_coarse = iou(seg.r0, *gt);
    }

    nlohmann::json supports_json = nlohmann::json::array();
    for (const auto& s : files.supports) supports_json.push_back({{"image", s.image.string()}, {"mask", s.mask.string()}});
    out.record = {
        {"engine", {{"name", "fds"}, {"version", kEngineVersion}}},
        {"config", config_echo(cfg)},
        {"query", files.query_image.string()},
        {"supports", supports_json},
        {"iou", out.iou ? nlohmann::json(*out.iou) : nlohmann::json(nullptr)},
        {"iou_coarse", out.iou_coarse ? nlohmann::json(*out.iou_coarse) : nlohmann::json(nullptr)},
        {"r0_pixels", seg.r0.count()},
        {"r_pixels", seg.r.count()},
        {"proposals", props.size()},
        {"selected", seg.fusion.selected_indices.size()},
        {"timings_ms",
         {{"extract", seg.timings.extract_ms},
          {"match", seg.timings.match_ms},
          {"fuse", seg.timings.fuse_ms},
          {"total", seg.timings.total_ms}}},
    };

    if (cfg.out_dir) {
        std::filesystem::create_directories(*cfg.out_dir);
        write_image(*cfg.out_dir / "overlay.png", overlay(query, seg.r));
        write_mask(*cfg.out_dir / "r0.png", seg.r0);
        write_mask(*cfg.out_dir / "r.png", seg.r);
        std::ofstream rec(*cfg.out_dir / "episode.json");
        if (!rec) throw InputError("cannot write episode record in " + cfg.out_dir->string());
        rec << out.record.dump(2) << '\n';
    }
    return out;
}

} // namespace fds
