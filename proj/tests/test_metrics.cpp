#include <gtest/gtest.h>

#include <random>

#include "fds/metrics.hpp"
#include "test_support.hpp"

namespace fds {
namespace {

using testing::mask_from_rows;

TEST(Iou, ByHand) {
    const auto a = mask_from_rows({"1100"});
    const auto b = mask_from_rows({"0110"});
    EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, mask_from_rows({"0011"})), 0.0);
    EXPECT_DOUBLE_EQ(iou(BinaryMask(4, 1), BinaryMask(4, 1)), 1.0);
    EXPECT_THROW(iou(a, BinaryMask(3, 1)), InputError);
}

TEST(Iou, SymmetricAndBounded) {
    std::mt19937 rng(1);
    for (int i = 0; i < 200; ++i) {
        const auto a = testing::random_mask(rng, 9, 7, 0.3);
        const auto b = testing::random_mask(rng, 9, 7, 0.3);
        const double v = iou(a, b);
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        ASSERT_EQ(v, iou(b, a));
    }
}

TEST(FbIou, TopHalfVersusLeftHalf) {
    // fg: inter 4, union 12; bg: inter 4, union 12
    MetricLedger ledger;
    ledger.accumulate("p", "k", mask_from_rows({"1111", "1111", "0000", "0000"}),
                      mask_from_rows({"1100", "1100", "1100", "1100"}));
    const auto r = ledger.report();
    EXPECT_NEAR(r.miou, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.product_fbiou.at("p"), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.mean_fbiou, 1.0 / 3.0, 1e-12);
}

TEST(MeanIou, UnweightedOverClasses) {
    // class a: 2/5 from accumulated counts; class b: perfect on one episode
    MetricLedger ledger;
    ledger.accumulate("p", "a", mask_from_rows({"1100000000"}), mask_from_rows({"1000000000"}));
    ledger.accumulate("p", "a", mask_from_rows({"0011100000"}), mask_from_rows({"0010000000"}));
    ledger.accumulate("q", "b", mask_from_rows({"1"}), mask_from_rows({"1"}));
    const auto r = ledger.report();
    EXPECT_NEAR(r.class_iou.at("p/a"), 2.0 / 5.0, 1e-12);
    EXPECT_NEAR(r.class_iou.at("q/b"), 1.0, 1e-12);
    EXPECT_NEAR(r.miou, 0.7, 1e-12);
}

TEST(MeanIou, TwoClassesAverage) {
    // 1 of 5 and 3 of 5
    MetricLedger ledger;
    ledger.accumulate("p", "a", mask_from_rows({"11111"}), mask_from_rows({"10000"}));
    ledger.accumulate("p", "b", mask_from_rows({"11111"}), mask_from_rows({"11100"}));
    const auto r = ledger.report();
    EXPECT_NEAR(r.class_iou.at("p/a"), 0.2, 1e-12);
    EXPECT_NEAR(r.class_iou.at("p/b"), 0.6, 1e-12);
    EXPECT_NEAR(r.miou, 0.4, 1e-12);
}

TEST(MeanIou, EqualUnionsHalfEachGivesHalf) {
    MetricLedger ledger;
    ledger.accumulate("p", "k", mask_from_rows({"1100"}), mask_from_rows({"1000"}));
    ledger.accumulate("p", "k", mask_from_rows({"0011"}), mask_from_rows({"0001"}));
    EXPECT_NEAR(ledger.report().miou, 0.5, 1e-12);
    const auto& counts = ledger.classes().at("p/k");
    EXPECT_EQ(counts.intersection, 2u);
    EXPECT_EQ(counts.unions, 4u);
}

TEST(MeanIou, AccumulatedNotAveragedPerEpisode) {
    // per-episode mean would be (1/1 + 1/9)/2; accumulated is 2/10
    MetricLedger ledger;
    ledger.accumulate("p", "k", mask_from_rows({"1"}), mask_from_rows({"1"}));
    ledger.accumulate("p", "k", mask_from_rows({"111000000"}), mask_from_rows({"100111111"}));
    EXPECT_NEAR(ledger.report().miou, 2.0 / 10.0, 1e-12);
}

TEST(MetricLedger, BothEmptyCountsAsPerfect) {
    MetricLedger ledger;
    EXPECT_TRUE(ledger.accumulate("p", "k", BinaryMask(3, 3), BinaryMask(3, 3)));
    EXPECT_EQ(ledger.both_empty(), 1u);
    const auto r = ledger.report();
    EXPECT_DOUBLE_EQ(r.miou, 1.0);
    EXPECT_DOUBLE_EQ(r.mean_fbiou, 1.0);
}

TEST(MetricLedger, EmptyLedgerCannotReport) {
    EXPECT_THROW(MetricLedger{}.report(), ProcessingError);
}

TEST(MetricLedger, PerProductVersusPooledFbIou) {
    MetricLedger ledger;
    ledger.accumulate("a", "k", mask_from_rows({"11"}), mask_from_rows({"11"}));
    ledger.accumulate("b", "k", mask_from_rows({"1000"}), mask_from_rows({"0001"}));
    const auto per = ledger.report(FbIouMode::per_product);
    const auto pooled = ledger.report(FbIouMode::pooled);
    // a: fg 1, bg 1 (both-empty background counts as 1). b: fg 0, bg 2/4
    EXPECT_NEAR(per.product_fbiou.at("a"), 1.0, 1e-12);
    EXPECT_NEAR(per.product_fbiou.at("b"), 0.25, 1e-12);
    EXPECT_NEAR(per.mean_fbiou, 0.625, 1e-12);
    // pooled: fg 2/4, bg 2/4
    EXPECT_NEAR(pooled.mean_fbiou, 0.5, 1e-12);
    EXPECT_EQ(parse_fbiou_mode(to_string(FbIouMode::pooled)), FbIouMode::pooled);
    EXPECT_THROW(parse_fbiou_mode("weighted"), InputError);
}

TEST(MetricLedger, MergeMatchesSequentialAccumulation) {
    std::mt19937 rng(5);
    const char* products[] = {"p", "q"};
    const char* classes[] = {"x", "y", "z"};
    for (int trial = 0; trial < 50; ++trial) {
        MetricLedger whole, left, right;
        for (int e = 0; e < 12; ++e) {
            const auto pred = testing::random_mask(rng, 6, 5, 0.4);
            const auto gt = testing::random_mask(rng, 6, 5, 0.4);
            const auto* p = products[rng() % 2];
            const auto* c = classes[rng() % 3];
            whole.accumulate(p, c, pred, gt);
            (e % 3 == 0 ? left : right).accumulate(p, c, pred, gt);
        }
        MetricLedger lr = left, rl = right;
        lr.merge(right);
        rl.merge(left);
        ASSERT_EQ(lr, whole);
        ASSERT_EQ(rl, whole);
        const auto r = whole.report();
        ASSERT_GE(r.miou, 0.0);
        ASSERT_LE(r.miou, 1.0);
        ASSERT_GE(r.mean_fbiou, 0.0);
        ASSERT_LE(r.mean_fbiou, 1.0);
    }
}

TEST(MetricLedger, PerfectPredictionsGiveOne) {
    std::mt19937 rng(6);
    MetricLedger ledger;
    for (int e = 0; e < 20; ++e) {
        const auto m = testing::random_mask(rng, 8, 8, 0.3);
        ledger.accumulate(e % 2 ? "p" : "q", e % 3 ? "a" : "b", m, m);
    }
    const auto r = ledger.report();
    EXPECT_DOUBLE_EQ(r.miou, 1.0);
    EXPECT_DOUBLE_EQ(r.mean_fbiou, 1.0);
    EXPECT_DOUBLE_EQ(r.pooled_fbiou, 1.0);
}

} // namespace
} // namespace fds
