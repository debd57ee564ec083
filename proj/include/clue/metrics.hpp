#pragma once

#include <cstdint>

#include "clue/loc_codec.hpp"

namespace clue {

// Degenerate (zero-area) union yields 0.
double iou(const BoxNorm& a, const BoxNorm& b);

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    void add(bool predicted_positive, bool actual_positive) {
        if (predicted_positive) (actual_positive ? tp : fp) += 1;
        else (actual_positive ? fn : tn) += 1;
    }
    std::int64_t total() const { return tp + fp + tn + fn; }
};

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // set when the corresponding ratio had a zero denominator and was reported as 0
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

// Throws on all-zero counts.
ClassificationMetrics classification_metrics(const ConfusionCounts& c);

// Reported scores of the full-scale system, kept for comparison output only.
namespace reference {
inline constexpr double kDetectorF1InDomain = 0.846;   // half-depth CNN detector, synthetic+IT2P
inline constexpr double kDetectorF1OutOfDomain = 0.765;  // same detector, real-world OOD set
inline constexpr int kPeakLayer = 14;
inline constexpr double kPeakLayerF1 = 0.726;
inline constexpr double kGuesserAccBaseline = 0.712;   // TiO, InViG-only
inline constexpr double kGuesserAccClue = 0.7566;      // LoRA-tuned mix checkpoint
}  // namespace reference

}  // namespace clue
