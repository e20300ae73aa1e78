#pragma once

#include <vector>

#include "owdet/dataset.hpp"
#include "owdet/detect.hpp"
#include "owdet/net.hpp"

namespace owdet {

struct PracticalHarvest {
    std::vector<ImageRecord> dataset; // D^{t+1}: only the oracle-labeled regions
    long long unknown_detections = 0;
    long long harvested = 0;
};

/// Pure harvesting core: every unknown-labeled detection overlapping (IoU >=
/// iou_thr) a ground-truth region of a next-task class is annotated with
/// that region's class, keeping the detection's box. Images without any
/// harvested region contribute nothing.
PracticalHarvest harvest_unknowns(
    const std::vector<ImageRecord>& next_task_images,
    const std::vector<std::vector<Detection>>& detections_per_image,
    const std::vector<int>& next_classes, double iou_thr);

/// Runs the previous task's detector over the next task's images and
/// harvests the oracle-labeled unknown regions as D^{t+1}.
template <typename T>
PracticalHarvest practical_mode_step(const nn::DetectorNet<T>& model, const GmmStore& gmms,
                                     const std::vector<int>& known_ids,
                                     const std::vector<ImageRecord>& next_task_images,
                                     const std::vector<int>& next_classes, double iou_thr,
                                     const Thresholds& th, const DetectConfig& dc) {
    std::vector<std::vector<Detection>> dets;
    dets.reserve(next_task_images.size());
    for (const auto& rec : next_task_images)
        dets.push_back(detect(model, rec.raster, gmms, known_ids, th, dc));
    return harvest_unknowns(next_task_images, dets, next_classes, iou_thr);
}

} // namespace owdet
