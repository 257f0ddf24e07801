// fds: few-shot defect segmentation command line.
//
//   fds run        segment one query from explicit support/query files
//   fds bench      run every episode of a dataset and write a report
//   fds features   dump | info for FMAP feature files
//   fds proposals  info for proposal files
//   fds config     print the effective configuration echo
//
// Exit codes: 0 success, 1 processing/benchmark failure, 2 input or config error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fds/dataset.hpp"
#include "fds/features.hpp"
#include "fds/image_io.hpp"
#include "fds/model_extractor.hpp"
#include "fds/pipeline.hpp"
#include "fds/proposals.hpp"

namespace {

struct CommonOptions {
    std::string model;
    std::string features_dir;
    int pool_factor = 4;
    std::string proposals_dir;
    std::string fg_strategy = "patch";
    std::string bg_strategy = "dense";
    std::string fusion = "paper";
    std::string fbiou_mode = "per-product";
    std::string out;
};

void add_common(CLI::App* cmd, fds::RunConfig& cfg, CommonOptions& opt) {
    cmd->add_option("--model", opt.model, "ONNX feature extractor (portable-model backend)");
    cmd->add_option("--features-dir", opt.features_dir, "Directory of precomputed FMAP files");
    cmd->add_option("--pool-factor", opt.pool_factor, "Pool factor of the built-in avgpool extractor")
        ->capture_default_str();
    cmd->add_option("--side", cfg.pipeline.image_side, "Working image side in pixels")->capture_default_str();
    cmd->add_option("--shots", cfg.shots, "Support samples per episode")->capture_default_str();
    cmd->add_option("--proposals-dir", opt.proposals_dir, "Directory of proposal files matched by stem");
    cmd->add_option("--tau1", cfg.pipeline.fusion.tau1, "Proposal selection threshold")->capture_default_str();
    cmd->add_option("--tau2", cfg.pipeline.fusion.tau2, "Component replacement coverage threshold")
        ->capture_default_str();
    cmd->add_option("--dilate", cfg.pipeline.fusion.dilation_k, "Dilation kernel side (odd)")->capture_default_str();
    cmd->add_option("--patch", cfg.pipeline.prototypes.patch_size, "Patch-averaging window side (odd)")
        ->capture_default_str();
    cmd->add_option("--fg-strategy", opt.fg_strategy, "Foreground prototypes: dense|patch|pool")->capture_default_str();
    cmd->add_option("--bg-strategy", opt.bg_strategy, "Background prototypes: dense|patch|pool")->capture_default_str();
    cmd->add_option("--fusion", opt.fusion, "Fusion: paper|none|sam-only|union")->capture_default_str();
    cmd->add_option("--fbiou-mode", opt.fbiou_mode, "Mean FB-IoU: per-product|pooled")->capture_default_str();
    cmd->add_option("--workers", cfg.workers, "Parallel episode workers")->capture_default_str();
    cmd->add_option("--out", opt.out, "Output directory");
}

void finish_config(fds::RunConfig& cfg, const CommonOptions& opt) {
    if (!opt.model.empty() && !opt.features_dir.empty())
        throw fds::InputError("--model and --features-dir are mutually exclusive");
    if (!opt.model.empty()) {
        cfg.extractor.kind = fds::ExtractorKind::portable_model;
        cfg.extractor.path = opt.model;
    } else if (!opt.features_dir.empty()) {
        cfg.extractor.kind = fds::ExtractorKind::feature_file;
        cfg.extractor.path = opt.features_dir;
    } else {
        cfg.extractor.kind = fds::ExtractorKind::trivial_avgpool;
        cfg.extractor.pool_factor = opt.pool_factor;
    }
    if (!opt.proposals_dir.empty()) cfg.proposals_dir = opt.proposals_dir;
    if (!opt.out.empty()) cfg.out_dir = opt.out;
    cfg.pipeline.prototypes.fg_strategy = fds::parse_prototype_strategy(opt.fg_strategy);
    cfg.pipeline.prototypes.bg_strategy = fds::parse_prototype_strategy(opt.bg_strategy);
    cfg.pipeline.fusion.strategy = fds::parse_fusion_strategy(opt.fusion);
    cfg.fbiou_mode = fds::parse_fbiou_mode(opt.fbiou_mode);
    cfg.validate();
}

nlohmann::json feature_info(const std::string& path) {
    const auto bytes = fds::read_file_bytes(path);
    const auto f = fds::decode_features(bytes);
    double lo = 0.0, hi = 0.0, sum = 0.0;
    const auto d = f.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        lo = i == 0 ? d[i] : std::min<double>(lo, d[i]);
        hi = i == 0 ? d[i] : std::max<double>(hi, d[i]);
        sum += d[i];
    }
    return {{"path", path},
            {"version", fds::kFeatureVersion},
            {"dtype", "f32"},
            {"height", f.height()},
            {"width", f.width()},
            {"channels", f.channels()},
            {"bytes", bytes.size()},
            {"min", lo},
            {"max", hi},
            {"mean", sum / static_cast<double>(d.size())}};
}

nlohmann::json proposal_info(const std::string& path) {
    const auto file = fds::read_proposal_file(path);
    nlohmann::json masks = nlohmann::json::array();
    std::size_t overlapping = 0;
    fds::BinaryMask seen(file.width, file.height);
    for (const auto& p : file.proposals) {
        overlapping += fds::intersection_count(seen, p.mask);
        seen = fds::mask_union(seen, p.mask);
        masks.push_back({{"area", p.mask.count()}, {"confidence", p.confidence}});
    }
    const auto disjoint = fds::deoverlap(file.proposals);
    return {{"path", path},
            {"height", file.height},
            {"width", file.width},
            {"count", file.proposals.size()},
            {"overlapping_pixels", overlapping},
            {"covered_pixels", seen.count()},
            {"after_deoverlap", disjoint.size()},
            {"masks", masks}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot industrial defect segmentation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", fds::kEngineVersion);

    fds::RunConfig cfg;
    CommonOptions opt;

    auto* run = app.add_subcommand("run", "Segment one query image");
    std::vector<std::string> support_images, support_masks;
    std::string query_image, query_mask, proposals_file;
    run->add_option("--support-image", support_images, "Support image (repeatable)")->required();
    run->add_option("--support-mask", support_masks, "Support mask, paired with --support-image")->required();
    run->add_option("--query-image", query_image, "Query image")->required();
    run->add_option("--query-mask", query_mask, "Query ground truth (enables IoU)");
    run->add_option("--proposals", proposals_file, "Proposal file for the query");
    add_common(run, cfg, opt);

    auto* bench = app.add_subcommand("bench", "Run the benchmark over a dataset");
    std::string class_list;
    bench->add_option("--root", cfg.root, "Dataset root")->required();
    bench->add_option("--classes", cfg.classes, "product or product/class filters");
    bench->add_option("--class-list", class_list, "File with one product/class per line");
    add_common(bench, cfg, opt);

    auto* config = app.add_subcommand("config", "Print the configuration echo");
    config->add_option("--root", cfg.root, "Dataset root");
    add_common(config, cfg, opt);

    auto* features = app.add_subcommand("features", "Feature file tools");
    features->require_subcommand(1);
    auto* fdump = features->add_subcommand("dump", "Extract features of one image into an FMAP file");
    std::string dump_image, dump_out, dump_key;
    fdump->add_option("--image", dump_image, "Input image")->required();
    fdump->add_option("--output,-o", dump_out, "Output .fmap path")->required();
    fdump->add_option("--model", opt.model, "ONNX feature extractor");
    fdump->add_option("--pool-factor", opt.pool_factor, "Avgpool factor when no model is given")->capture_default_str();
    fdump->add_option("--side", cfg.pipeline.image_side, "Working image side")->capture_default_str();
    auto* finfo = features->add_subcommand("info", "Describe an FMAP file");
    std::string info_path;
    finfo->add_option("file", info_path, "FMAP file")->required();

    auto* proposals = app.add_subcommand("proposals", "Proposal file tools");
    proposals->require_subcommand(1);
    auto* pinfo = proposals->add_subcommand("info", "Describe a proposal file");
    std::string pinfo_path;
    pinfo->add_option("file", pinfo_path, "Proposal file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            if (support_images.size() != support_masks.size())
                throw fds::InputError("--support-image and --support-mask must be given the same number of times");
            finish_config(cfg, opt);
            fds::EpisodeFiles files;
            for (std::size_t i = 0; i < support_images.size(); ++i)
                files.supports.push_back({support_images[i], support_masks[i]});
            files.query_image = query_image;
            if (!query_mask.empty()) files.query_mask = query_mask;
            if (!proposals_file.empty()) files.proposals_file = proposals_file;
            const auto outcome = fds::run_episode(cfg, files);
            std::cout << outcome.record.dump(2) << '\n';
        } else if (*bench) {
            if (!class_list.empty()) {
                auto extra = fds::read_class_list(class_list);
                cfg.classes.insert(cfg.classes.end(), extra.begin(), extra.end());
            }
            finish_config(cfg, opt);
            const auto result = fds::run_benchmark(cfg);
            const auto& m = result.report["metrics"];
            std::cout << "episodes " << result.ledger.episodes() << "  mIoU " << m["miou"].get<double>()
                      << "  FB-IoU " << m["mean_fbiou"].get<double>() << '\n';
            if (cfg.out_dir) std::cout << "report written to " << (*cfg.out_dir / "report.json").string() << '\n';
            else std::cout << result.report.dump(2) << '\n';
        } else if (*config) {
            finish_config(cfg, opt);
            std::cout << fds::config_echo(cfg).dump() << '\n';
        } else if (*fdump) {
            if (!opt.model.empty()) {
                cfg.extractor.kind = fds::ExtractorKind::portable_model;
                cfg.extractor.path = opt.model;
            } else {
                cfg.extractor.pool_factor = opt.pool_factor;
            }
            auto extractor = fds::make_extractor(cfg.extractor);
            const auto img = fds::resize_image(fds::read_image(dump_image), cfg.pipeline.image_side);
            const auto f = extractor->extract(img, std::filesystem::path(dump_image).stem().string());
            fds::save_features(f, dump_out);
            std::cout << feature_info(dump_out).dump(2) << '\n';
        } else if (*finfo) {
            std::cout << feature_info(info_path).dump(2) << '\n';
        } else if (*pinfo) {
            std::cout << proposal_info(pinfo_path).dump(2) << '\n';
        }
    } catch (const fds::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
