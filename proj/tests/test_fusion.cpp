#include <gtest/gtest.h>

#include <random>

#include "fds/fusion.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace fds {
namespace {

using testing::fill_rect;
using testing::mask_from_rows;

ProposalSet props_of(const std::vector<BinaryMask>& masks) {
    std::vector<RawProposal> raw;
    for (const auto& m : masks) raw.push_back({m, 0.5});
    return deoverlap(raw);
}

ProposalSet raw_set(int w, int h, const std::vector<BinaryMask>& masks) {
    ProposalSet p{w, h, masks, std::vector<double>(masks.size(), 0.5), false};
    return p;
}

TEST(SelectMasks, FractionInsideCoarseMask) {
    // 10-pixel proposal with 3 pixels inside R0: ratio 0.3
    BinaryMask r0(10, 2);
    fill_rect(r0, 1, 0, 1, 3);
    BinaryMask m(10, 2);
    fill_rect(m, 1, 0, 1, 10);
    const auto p = raw_set(10, 2, {m});
    EXPECT_EQ(select_mask_indices(p, r0, 0.2).size(), 1u);
    EXPECT_EQ(select_mask_indices(p, r0, 0.3).size(), 0u);  // strict
    EXPECT_EQ(select_mask_indices(p, r0, 0.5).size(), 0u);
}

TEST(SelectMasks, FullyOutsideNeverSelected) {
    const auto r0 = mask_from_rows({"1100", "0000"});
    const auto m = mask_from_rows({"0000", "0011"});
    EXPECT_TRUE(select_mask_indices(raw_set(4, 2, {m}), r0, 0.0).empty());
}

TEST(SelectMasks, ShapeMismatchRejected) {
    EXPECT_THROW(select_masks(raw_set(4, 4, {BinaryMask(4, 4)}), BinaryMask(5, 4), 0.2), InputError);
}

TEST(RetainComponents, HalfCoveredComponentIsKept) {
    BinaryMask r0(20, 20);
    fill_rect(r0, 5, 5, 4, 4);
    BinaryMask m(20, 20);
    fill_rect(m, 5, 5, 4, 2);
    const auto res = retain_components(r0, raw_set(20, 20, {m}), 0.9, 1);
    EXPECT_EQ(res.retained, std::vector<std::size_t>{0});
    EXPECT_TRUE(res.dropped.empty());
    // a 5x5 dilation reaches the remaining columns
    const auto dil = retain_components(r0, raw_set(20, 20, {m}), 0.9, 5);
    EXPECT_EQ(dil.dropped, std::vector<std::size_t>{0});
}

TEST(RetainComponents, CoverageMustComeFromOneProposal) {
    // two proposals each covering half; neither alone reaches tau2
    BinaryMask r0(20, 20);
    fill_rect(r0, 5, 5, 4, 4);
    BinaryMask a(20, 20), b(20, 20);
    fill_rect(a, 5, 5, 4, 2);
    fill_rect(b, 5, 7, 4, 2);
    const auto res = retain_components(r0, raw_set(20, 20, {a, b}), 0.9, 1);
    EXPECT_EQ(res.retained.size(), 1u);
}

TEST(RetainComponents, ExactThresholdDrops) {
    BinaryMask r0(10, 1);
    fill_rect(r0, 0, 0, 1, 10);
    BinaryMask m(10, 1);
    fill_rect(m, 0, 0, 1, 9);
    EXPECT_EQ(retain_components(r0, raw_set(10, 1, {m}), 0.9, 1).dropped.size(), 1u);
}

TEST(Fuse, NoProposalsReturnsCoarseMask) {
    const auto r0 = mask_from_rows({"0110", "0110", "0000"});
    const auto res = fuse(r0, ProposalSet{});
    EXPECT_EQ(res.r, r0);
    EXPECT_FALSE(res.r_sam.any());
}

TEST(Fuse, EmptyCoarseMaskGivesEmptyResult) {
    const auto m = mask_from_rows({"0110", "0110", "0000"});
    const auto res = fuse(BinaryMask(4, 3), props_of({m}));
    EXPECT_FALSE(res.r.any());
    EXPECT_TRUE(res.selected_indices.empty());
}

TEST(Fuse, TwoBlobScene) {
    // R0: a blob at top-left that a proposal sharpens, and a blob at bottom
    // right with no proposal. A second proposal lies entirely in background.
    BinaryMask r0(16, 16);
    fill_rect(r0, 1, 1, 4, 4);
    fill_rect(r0, 11, 11, 3, 3);
    BinaryMask sharp(16, 16);
    fill_rect(sharp, 1, 1, 3, 4);
    sharp.set(4, 1);
    BinaryMask stray(16, 16);
    fill_rect(stray, 0, 10, 2, 6);
    const auto props = props_of({sharp, stray});
    const auto res = fuse(r0, props, {0.2, 0.9, 3, FusionStrategy::select_retain});

    EXPECT_EQ(res.selected_indices, std::vector<std::size_t>{0});
    BinaryMask expected = sharp;
    fill_rect(expected, 11, 11, 3, 3);
    EXPECT_EQ(res.r, expected);
    EXPECT_EQ(res.r, oracle::fuse_select_retain(r0, props.masks, 0.2, 0.9, 3));
}

TEST(Fuse, StrategiesByHand) {
    const auto r0 = mask_from_rows({"1100", "1100", "0000", "0001"});
    const auto p = mask_from_rows({"1110", "0000", "0000", "0000"});
    const auto props = props_of({p});
    auto cfg = FusionConfig{0.2, 0.9, 1, FusionStrategy::none};
    EXPECT_EQ(fuse(r0, props, cfg).r, r0);
    cfg.strategy = FusionStrategy::sam_only;
    EXPECT_EQ(fuse(r0, props, cfg).r, p);
    cfg.strategy = FusionStrategy::simple_union;
    EXPECT_EQ(fuse(r0, props, cfg).r, mask_from_rows({"1110", "1100", "0000", "0001"}));
    cfg.strategy = FusionStrategy::select_retain;
    // top-left component half covered with k=1: kept
    EXPECT_EQ(fuse(r0, props, cfg).r, mask_from_rows({"1110", "1100", "0000", "0001"}));
    cfg.dilation_k = 3;
    EXPECT_EQ(fuse(r0, props, cfg).r, mask_from_rows({"1110", "0000", "0000", "0001"}));
}

TEST(Fuse, InvalidConfigRejected) {
    const BinaryMask r0(2, 2);
    EXPECT_THROW(fuse(r0, {}, {1.5, 0.9, 21, FusionStrategy::select_retain}), InputError);
    EXPECT_THROW(fuse(r0, {}, {0.2, -0.1, 21, FusionStrategy::select_retain}), InputError);
    EXPECT_THROW(fuse(r0, {}, {0.2, 0.9, 20, FusionStrategy::select_retain}), InputError);
}

TEST(Fuse, StrategyNamesRoundTrip) {
    for (auto s : {FusionStrategy::none, FusionStrategy::sam_only, FusionStrategy::simple_union,
                   FusionStrategy::select_retain})
        EXPECT_EQ(parse_fusion_strategy(to_string(s)), s);
    EXPECT_THROW(parse_fusion_strategy("mean"), InputError);
}

struct RandomInstance {
    BinaryMask r0;
    ProposalSet props;
};

RandomInstance random_instance(std::mt19937& rng) {
    std::uniform_int_distribution<int> dim(4, 16), count(0, 4);
    const int w = dim(rng), h = dim(rng);
    RandomInstance inst{testing::random_blobs(rng, w, h, 3), {}};
    std::vector<RawProposal> raw;
    const int n = count(rng);
    std::uniform_real_distribution<double> conf(0.0, 1.0);
    for (int i = 0; i < n; ++i) raw.push_back({testing::random_blobs(rng, w, h, 2), conf(rng)});
    inst.props = deoverlap(raw);
    return inst;
}

TEST(FuseProperties, AgreesWithLiteralOracle) {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> tau(0.0, 1.0);
    const int ks[] = {1, 3, 5};
    for (int trial = 0; trial < 500; ++trial) {
        const auto inst = random_instance(rng);
        const double t1 = tau(rng), t2 = tau(rng);
        const int k = ks[trial % 3];
        const auto res = fuse(inst.r0, inst.props, {t1, t2, k, FusionStrategy::select_retain});
        ASSERT_EQ(res.r, oracle::fuse_select_retain(inst.r0, inst.props.masks, t1, t2, k)) << "trial " << trial;
    }
}

TEST(FuseProperties, ContainmentAndCoverage) {
    std::mt19937 rng(19);
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = random_instance(rng);
        const auto res = fuse(inst.r0, inst.props, {0.2, 0.9, 3, FusionStrategy::select_retain});
        // R_sam <= R <= R_sam u R0
        ASSERT_TRUE(is_subset(res.r_sam, res.r));
        ASSERT_TRUE(is_subset(res.r, mask_union(res.r_sam, inst.r0)));
        // union strategy is the upper envelope
        const auto u = fuse(inst.r0, inst.props, {0.2, 0.9, 3, FusionStrategy::simple_union});
        ASSERT_TRUE(is_subset(res.r, u.r));
        ASSERT_TRUE(is_subset(inst.r0, u.r));
        ASSERT_TRUE(is_subset(res.r_sam, u.r));
        ASSERT_EQ(fuse(inst.r0, inst.props, {0.2, 0.9, 3, FusionStrategy::none}).r, inst.r0);

        const auto& comps = res.retention.components;
        for (auto l : res.retention.retained) ASSERT_TRUE(is_subset(comps.region_mask(l), res.r));
        for (auto l : res.retention.dropped) {
            const auto region = comps.region_mask(l);
            bool covered = false;
            for (const auto& m : res.selected.masks)
                covered |= static_cast<double>(oracle::overlap(oracle::dilate(m, 3), region)) >=
                           0.9 * static_cast<double>(region.count());
            ASSERT_TRUE(covered);
        }
    }
}

TEST(FuseProperties, SelectionMonotoneInTau1) {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = random_instance(rng);
        std::vector<std::size_t> prev = select_mask_indices(inst.props, inst.r0, 0.0);
        for (double t : {0.1, 0.3, 0.5, 0.8, 1.0}) {
            const auto cur = select_mask_indices(inst.props, inst.r0, t);
            ASSERT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
            prev = cur;
        }
        ASSERT_TRUE(prev.empty());  // no ratio exceeds 1
    }
}

TEST(FuseProperties, RetentionMonotoneInTau2AndKernel) {
    std::mt19937 rng(29);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = random_instance(rng);
        const auto sel = select_masks(inst.props, inst.r0, 0.2);
        std::size_t prev = 0;
        for (double t2 : {0.0, 0.25, 0.5, 0.9, 1.0}) {
            const auto kept = retain_components(inst.r0, sel, t2, 3).retained.size();
            ASSERT_GE(kept, prev);
            prev = kept;
        }
        prev = SIZE_MAX;
        for (int k : {1, 3, 5, 7}) {
            const auto kept = retain_components(inst.r0, sel, 0.9, k).retained.size();
            ASSERT_LE(kept, prev);
            prev = kept;
        }
    }
}

TEST(FuseProperties, DropsCoveredComponentAtDefaults) {
    // a proposal that tightly outlines a 30x30 coarse blob removes it
    BinaryMask r0(64, 64);
    fill_rect(r0, 10, 10, 30, 30);
    BinaryMask p(64, 64);
    fill_rect(p, 15, 15, 20, 20);
    const auto res = fuse(r0, props_of({p}));
    EXPECT_EQ(res.r, p);
    EXPECT_EQ(res.retention.dropped.size(), 1u);
}

} // namespace
} // namespace fds
