#pragma once

#include <vector>

#include "owdet/dataset.hpp"

namespace owdet {

/// Greedy per-label suppression by descending score (unknown is its own
/// label group); ties break on input index. Output keeps score-then-index
/// order.
std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold);

} // namespace owdet
