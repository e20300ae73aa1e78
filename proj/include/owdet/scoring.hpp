#pragma once

#include <array>
#include <optional>
#include <vector>

#include "owdet/dataset.hpp"
#include "owdet/geometry.hpp"

namespace owdet {

struct Thresholds {
    double theta_obj = 0.69;       // objectness gate for unknown detection
    double theta_cls = 0.5;        // class-score gate for overconfidence handling
    double theta_conf = 0.05;      // low-confidence gate over known scores
    double baseline_unknown = 0.2; // naive-baseline relabel threshold

    void validate() const;
};

/// Head outputs for one region, in plain doubles; the scoring logic is
/// independent of the network's scalar type.
struct RegionOutput {
    std::vector<double> cls_logits;  // K+1 entries, background last
    std::vector<double> clsbox;      // 4K per-class deltas
    std::array<double, 4> agnbox{};  // class-agnostic delta
    double iou_logit = 0;
    double ctr_logit = 0;            // from the originating proposal
    BoundingBox proposal;
};

/// Geometric mean of the logistic-squashed centerness and IoU logits.
double objectness(double ctr_logit, double iou_logit);

/// Scores over known classes + {unknown, background}, with per-class boxes.
/// Known scores stay a softmax slice; the unknown entry is set from the
/// objectness score when the unknown branch fires.
struct ClassScores {
    std::vector<double> known;        // dense order
    double unknown = 0;
    double background = 0;
    std::vector<BoundingBox> known_boxes;
    BoundingBox unknown_box;

    /// Argmax over known ∪ {unknown, background}. Returns the dense class
    /// index, known_count() for unknown, known_count()+1 for background.
    int argmax() const;
    int known_count() const { return static_cast<int>(known.size()); }
};

ClassScores calculate_class_scores_and_boxes(const RegionOutput& region, double s_obj,
                                             const Thresholds& th, int known_count,
                                             double image_w, double image_h,
                                             bool unknown_branch_enabled = true);

struct OverconfidenceResult {
    bool relabeled = false;      // true when the prediction became unknown
    double score = 0;            // revised score when relabeled
    bool mixture_missing = false;
    double s_like = 0;           // log-likelihood under G_k (when evaluated)
};

class GmmStore; // gmm.hpp

/// Decides whether a low-confidence known prediction is an open-set error.
/// Predictions at or above theta_cls pass through untouched, as do classes
/// without a fitted mixture.
OverconfidenceResult handle_overconfident(int dense_class, double s_cls,
                                          const RegionOutput& region, double s_obj,
                                          const GmmStore& gmms, const Thresholds& th,
                                          const std::vector<int>& known_ids);

} // namespace owdet
