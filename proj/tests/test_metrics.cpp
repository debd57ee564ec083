#include <gtest/gtest.h>

#include "clue/metrics.hpp"
#include "oracles.hpp"

using namespace clue;

namespace {

BoxNorm random_box(Rng& rng) {
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
    return {std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
}

}  // namespace

TEST(Iou, AnalyticCases) {
    const BoxNorm unit{0, 0, 1, 1};
    EXPECT_NEAR(iou(unit, unit), 1.0, 1e-9);
    EXPECT_NEAR(iou({0, 0, 0.4, 0.4}, {0.5, 0.5, 1, 1}), 0.0, 1e-9);
    EXPECT_NEAR(iou(unit, {0, 0.5, 1, 1.5}), 1.0 / 3, 1e-9);
    EXPECT_NEAR(oracle::raster_iou(unit, {0, 0.5, 1, 1.5}, 2048, 0.0, 1.5), 1.0 / 3, 1e-3);
    EXPECT_EQ(iou({0.5, 0.5, 0.5, 0.5}, {0.5, 0.5, 0.5, 0.5}), 0.0);
    EXPECT_EQ(iou({0.1, 0.1, 0.1, 0.9}, {0.1, 0.1, 0.1, 0.9}), 0.0);
}

TEST(Iou, MatchesRasterOracle) {
    Rng rng(2048);
    for (int i = 0; i < 200; ++i) {
        const BoxNorm a = random_box(rng), b = random_box(rng);
        EXPECT_NEAR(iou(a, b), oracle::raster_iou(a, b, 2048), 1e-3);
    }
}

TEST(Iou, Properties) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const BoxNorm a = random_box(rng), b = random_box(rng);
        const double v = iou(a, b);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_EQ(v, iou(b, a));
        if (a.area() > 0) {
            EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
        }
        // shrinking b inside a lowers the overlap ratio
        if (a.area() > 0) {
            const double s = rng.uniform(0.1, 0.9);
            const BoxNorm inner{a.y_min, a.x_min, a.y_min + (a.y_max - a.y_min) * s, a.x_min + (a.x_max - a.x_min) * s};
            const BoxNorm smaller{inner.y_min, inner.x_min, inner.y_min + (inner.y_max - inner.y_min) * s,
                                  inner.x_min + (inner.x_max - inner.x_min) * s};
            EXPECT_LE(iou(a, smaller), iou(a, inner) + 1e-15);
        }
    }
}

TEST(ClassificationMetrics, Examples) {
    ConfusionCounts c{1, 0, 1, 0};
    auto m = classification_metrics(c);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);

    m = classification_metrics({0, 0, 5, 3});
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_TRUE(m.precision_undefined);
    EXPECT_FALSE(m.recall_undefined);
    EXPECT_TRUE(m.f1_undefined);

    m = classification_metrics({846, 153, 847, 154});
    EXPECT_NEAR(m.f1, reference::kDetectorF1InDomain, 5e-4);
    EXPECT_NEAR(m.precision, 846.0 / 999, 1e-15);
    EXPECT_NEAR(m.recall, 846.0 / 1000, 1e-15);

    EXPECT_THROW(classification_metrics({}), Error);
    EXPECT_THROW(classification_metrics({-1, 2, 0, 0}), Error);
}

TEST(ClassificationMetrics, F1IsHarmonicMean) {
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        ConfusionCounts c{static_cast<std::int64_t>(1 + rng.below(100)), static_cast<std::int64_t>(rng.below(100)),
                          static_cast<std::int64_t>(rng.below(100)), static_cast<std::int64_t>(rng.below(100))};
        const auto m = classification_metrics(c);
        EXPECT_NEAR(m.f1, 2 / (1 / m.precision + 1 / m.recall), 1e-12);
    }
}

TEST(ConfusionCounts, Add) {
    ConfusionCounts c;
    c.add(true, true);
    c.add(true, false);
    c.add(false, true);
    c.add(false, false);
    c.add(false, false);
    EXPECT_EQ(c.tp, 1);
    EXPECT_EQ(c.fp, 1);
    EXPECT_EQ(c.fn, 1);
    EXPECT_EQ(c.tn, 2);
    EXPECT_EQ(c.total(), 5);
}

TEST(Reference, StoredConstants) {
    EXPECT_EQ(reference::kDetectorF1InDomain, 0.846);
    EXPECT_EQ(reference::kDetectorF1OutOfDomain, 0.765);
    EXPECT_EQ(reference::kPeakLayer, 14);
    EXPECT_EQ(reference::kPeakLayerF1, 0.726);
    EXPECT_EQ(reference::kGuesserAccBaseline, 0.712);
    EXPECT_EQ(reference::kGuesserAccClue, 0.7566);
}
