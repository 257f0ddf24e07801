#pragma once

// Proposal files: a JSON document
//   {"height": H, "width": W, "masks": [{"rle": [c0, c1, ...], "confidence": p}, ...]}
// Each rle is a row-major run-length encoding alternating background and
// foreground runs, starting with background (c0 may be 0). Counts are
// non-negative integers summing to H*W.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fds/core.hpp"
#include "fds/maskops.hpp"

namespace fds {

inline std::vector<std::uint64_t> rle_encode(const BinaryMask& mask) {
    std::vector<std::uint64_t> counts;
    bool current = false;
    std::uint64_t run = 0;
    for (auto v : mask.values()) {
        if ((v != 0) != current) {
            counts.push_back(run);
            run = 0;
            current = !current;
        }
        ++run;
    }
    counts.push_back(run);
    return counts;
}

inline BinaryMask rle_decode(const std::vector<std::uint64_t>& counts, int width, int height) {
    const std::uint64_t total = static_cast<std::uint64_t>(width) * height;
    BinaryMask m(width, height);
    std::uint64_t pos = 0;
    bool fg = false;
    for (auto c : counts) {
        if (c > total - pos)
            throw InputError("rle counts exceed " + std::to_string(total) + " pixels");
        if (fg)
            for (std::uint64_t i = 0; i < c; ++i) m.set_index(static_cast<std::size_t>(pos + i));
        pos += c;
        fg = !fg;
    }
    if (pos != total)
        throw InputError("rle counts sum to " + std::to_string(pos) + ", expected " + std::to_string(total));
    return m;
}

struct ProposalFile {
    int width = 0;
    int height = 0;
    std::vector<RawProposal> proposals;
};

inline nlohmann::json proposals_to_json(const ProposalFile& file) {
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& p : file.proposals)
        masks.push_back({{"rle", rle_encode(p.mask)}, {"confidence", p.confidence}});
    return {{"height", file.height}, {"width", file.width}, {"masks", std::move(masks)}};
}

inline ProposalFile proposals_from_json(const nlohmann::json& doc) {
    using nlohmann::json;
    if (!doc.is_object()) throw InputError("proposal document must be an object");
    auto dim = [&](const char* key) {
        if (!doc.contains(key) || !doc[key].is_number_unsigned())
            throw InputError(std::string("proposal document needs a non-negative integer '") + key + "'");
        const auto v = doc[key].get<std::uint64_t>();
        if (v == 0 || v > (1u << 20)) throw InputError(std::string("proposal '") + key + "' out of range");
        return static_cast<int>(v);
    };
    ProposalFile file;
    file.height = dim("height");
    file.width = dim("width");
    if (!doc.contains("masks") || !doc["masks"].is_array()) throw InputError("proposal document needs a 'masks' array");

    std::size_t idx = 0;
    for (const auto& m : doc["masks"]) {
        const std::string where = "mask " + std::to_string(idx++);
        if (!m.is_object() || !m.contains("rle") || !m["rle"].is_array())
            throw InputError(where + ": missing 'rle' array");
        std::vector<std::uint64_t> counts;
        counts.reserve(m["rle"].size());
        for (const auto& c : m["rle"]) {
            if (!c.is_number_unsigned() && !(c.is_number_integer() && c.get<std::int64_t>() >= 0))
                throw InputError(where + ": rle counts must be non-negative integers");
            counts.push_back(c.get<std::uint64_t>());
        }
        if (!m.contains("confidence") || !m["confidence"].is_number())
            throw InputError(where + ": missing numeric 'confidence'");
        const double conf = m["confidence"].get<double>();
        if (!(conf >= 0.0 && conf <= 1.0)) throw InputError(where + ": confidence outside [0,1]");
        try {
            file.proposals.push_back({rle_decode(counts, file.width, file.height), conf});
        } catch (const InputError& e) {
            throw InputError(where + ": " + e.what());
        }
    }
    return file;
}

inline ProposalFile read_proposal_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read proposal file " + path.string());
    try {
        return proposals_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void write_proposal_file(const std::filesystem::path& path, const ProposalFile& file) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write proposal file " + path.string());
    out << proposals_to_json(file).dump() << '\n';
}

} // namespace fds
