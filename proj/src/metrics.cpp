#include "clue/metrics.hpp"

#include <algorithm>

#include "clue/common.hpp"

namespace clue {

double iou(const BoxNorm& a, const BoxNorm& b) {
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double inter = iy * ix;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
    if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) throw Error("negative confusion count");
    if (c.total() == 0) throw Error("all confusion counts are zero");
    ClassificationMetrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    else m.precision_undefined = true;
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    else m.recall_undefined = true;
    if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else m.f1_undefined = true;
    return m;
}

}  // namespace clue
