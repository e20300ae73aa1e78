#pragma once

#include <array>
#include <optional>
#include <random>
#include <vector>

#include "owdet/dataset.hpp"
#include "owdet/geometry.hpp"

namespace owdet {

/// Distances from an anchor centre to the four box edges, in pixels.
struct LtrbOffsets {
    double l = 0, t = 0, r = 0, b = 0;
};

/// Localization-quality target: 1 at the box centre, 0 on an edge.
/// Invariant under uniform scaling of the offsets.
double centerness_target(const LtrbOffsets& o);

LtrbOffsets encode_ltrb(double cx, double cy, const BoundingBox& gt);
BoundingBox decode_ltrb(double cx, double cy, const LtrbOffsets& o);

/// One anchor point of the pyramid grid (anchor-free: a single point per
/// feature cell, centred at ((x+0.5)*stride, (y+0.5)*stride)).
struct AnchorPoint {
    int level = 0; // index into the stride list
    int y = 0, x = 0;
    double stride = 4.0;
    double cx() const { return (x + 0.5) * stride; }
    double cy() const { return (y + 0.5) * stride; }
};

std::vector<AnchorPoint> make_anchor_grid(const std::vector<std::pair<int, int>>& level_dims,
                                          const std::vector<double>& strides);

struct RpnTarget {
    AnchorPoint anchor;
    double ctr_target = 0;                   // centerness of the assigned gt
    std::array<double, 4> ltrb_norm{};       // ltrb / stride
};

/// Random sample of anchors whose centres fall inside a ground-truth box.
/// An anchor inside several boxes goes to the gt whose centre is nearest
/// (ties to the lower gt index). Anchors outside every gt are never sampled.
std::vector<RpnTarget> assign_rpn_targets(const std::vector<AnchorPoint>& anchors,
                                          const std::vector<BoundingBox>& gts, int sample_size,
                                          std::mt19937_64& rng);

/// Standard R-CNN box encoding relative to a proposal.
std::array<double, 4> encode_box_delta(const BoundingBox& proposal, const BoundingBox& gt);
BoundingBox decode_box_delta(const BoundingBox& proposal, const std::array<double, 4>& delta);

/// Two-threshold proposal assignment for the RoI stage.
struct RoiAssignment {
    int cls_target = -1;   // dense class index, background index, or -1 = ignored
    int matched_gt = -1;   // index into gts when a positive
    double matched_iou = 0;
    double max_iou = 0;    // against all gts (any class)
};

RoiAssignment assign_roi_target(const BoundingBox& proposal,
                                const std::vector<Annotation>& gts,
                                const std::vector<int>& dense_of_class, int background_index,
                                double pos_iou, double neg_iou);

} // namespace owdet
