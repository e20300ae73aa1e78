#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "owdet/dataset.hpp"

namespace owdet {

/// Greedy one-to-one matching of pre-sorted detections against a gt pool.
struct MatchOutcome {
    bool tp = false;
    int gt_index = -1;
    double iou_value = 0;
};

/// `dets` must already be sorted by descending score; each detection takes
/// the highest-IoU unmatched gt at or above the threshold (ties to the
/// lower gt index).
std::vector<MatchOutcome> match_detections(const std::vector<Detection>& dets,
                                           const std::vector<BoundingBox>& gts, double iou_thr);

/// Ground truth and detections for one evaluated image. Known-class and
/// unknown-pool boxes are disjoint by construction.
struct EvalImage {
    std::string image_id;
    std::vector<Annotation> known_gts;
    std::vector<BoundingBox> unknown_gts; // future-task classes
    std::vector<Detection> detections;
};

struct EvalFrame {
    std::vector<EvalImage> images;
    double iou_thr = 0.5;
};

/// Splits each record's annotations into known gts and the unknown pool for
/// the registry's current task and attaches the per-image detections.
EvalFrame build_eval_frame(const std::vector<ImageRecord>& records,
                           const std::map<std::string, std::vector<Detection>>& dets_by_image,
                           const ClassRegistry& registry, double iou_thr);

/// Pascal VOC 2010 "all points" average precision: non-increasing precision
/// envelope integrated over every recall change point.
/// `scored`: (score, is_tp) pairs in any order; `gt_count` the positives.
/// Returns nullopt when gt_count is zero (AP undefined for the class).
std::optional<double> average_precision_voc2010(std::vector<std::pair<double, bool>> scored,
                                                long long gt_count);

std::optional<double> per_class_ap(const EvalFrame& frame, int class_id);

/// Fraction of unknown-pool boxes matched by unknown-labeled detections.
/// Not applicable (nullopt) when the pool is empty.
std::optional<double> u_recall(const EvalFrame& frame);

/// Detections with a known-class label that are no TP for any known gt and
/// whose box matches an unknown-pool gt: the absolute open-set error count.
long long a_ose(const EvalFrame& frame);

/// WI = P_closed / P_open - 1 at the configured recall level, with
/// open-set-error detections excluded from the closed stream.
std::optional<double> wilderness_impact(const EvalFrame& frame, double recall_level);

/// Harmonic mean of the previously-known and current-known mAP.
double f1i(double prev_map, double cur_map);

struct UnknownPrecisionResult {
    std::optional<double> precision; // nullopt when there are no unknown detections
    double recall = 0;
    std::optional<double> ap50;
};

/// Precision/recall of unknown-labeled detections against the unknown pool;
/// genuinely unlabeled unknowns depress the precision, so treat it as a
/// lower bound.
UnknownPrecisionResult unknown_precision(const EvalFrame& frame);

struct MetricsReport {
    std::map<int, double> per_class;        // AP for classes with gt support
    std::vector<int> undefined_classes;     // zero-gt classes excluded from mAP
    std::optional<double> map_prev, map_cur, map_both;
    std::optional<double> u_recall_value;
    long long a_ose_value = 0;
    std::optional<double> wi_value;
    std::optional<double> f1i_value;
    std::optional<double> unknown_precision_value;
    double unknown_recall_value = 0;
    std::optional<double> unknown_ap50;
    long long image_count = 0;
    long long detection_count = 0;
    double iou_thr = 0.5;
    double wi_recall_level = 0.8;
};

MetricsReport evaluate_frame(const EvalFrame& frame, const ClassRegistry& registry,
                             double wi_recall_level);

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics_json(const std::filesystem::path& path);

/// One row per task in the layout of the protocol tables: U-Recall, mAP
/// prev/current/both, A-OSE, WI (values in percent where applicable).
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<int, MetricsReport>>& per_task);

} // namespace owdet
