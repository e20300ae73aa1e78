#include "owdet/practical.hpp"

#include <set>

namespace owdet {

PracticalHarvest harvest_unknowns(
    const std::vector<ImageRecord>& next_task_images,
    const std::vector<std::vector<Detection>>& detections_per_image,
    const std::vector<int>& next_classes, double iou_thr) {
    if (next_task_images.size() != detections_per_image.size())
        throw std::invalid_argument("harvest_unknowns: detections/images size mismatch");
    const std::set<int> next(next_classes.begin(), next_classes.end());

    PracticalHarvest out;
    for (size_t i = 0; i < next_task_images.size(); ++i) {
        const ImageRecord& rec = next_task_images[i];
        std::vector<Annotation> harvested;
        for (const auto& det : detections_per_image[i]) {
            if (det.label != UNKNOWN_CLASS) continue;
            ++out.unknown_detections;
            int best_class = 0;
            double best_iou = 0;
            for (const auto& gt : rec.annotations) {
                if (!next.count(gt.class_id)) continue;
                const double v = iou(det.box, gt.box);
                if (v >= iou_thr && v > best_iou) {
                    best_iou = v;
                    best_class = gt.class_id;
                }
            }
            if (best_iou > 0) {
                // the oracle supplies the class; the region stays the detection's box
                harvested.push_back({best_class,
                                     det.box.clipped(rec.width, rec.height)});
                ++out.harvested;
            }
        }
        if (!harvested.empty()) {
            ImageRecord labeled = rec;
            labeled.annotations = std::move(harvested);
            out.dataset.push_back(std::move(labeled));
        }
    }
    return out;
}

} // namespace owdet
