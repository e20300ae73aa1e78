#include "owdet/nms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace owdet {

std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold) {
    for (const auto& d : detections)
        if (!std::isfinite(d.score)) throw std::invalid_argument("nms: non-finite score");

    std::vector<size_t> order(detections.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (detections[a].score != detections[b].score) return detections[a].score > detections[b].score;
        return a < b;
    });

    std::vector<Detection> kept;
    for (size_t idx : order) {
        const Detection& d = detections[idx];
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.label != d.label) continue;
            if (iou(k.box, d.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

} // namespace owdet
