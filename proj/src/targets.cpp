#include "owdet/targets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace owdet {

double centerness_target(const LtrbOffsets& o) {
    if (o.l < 0 || o.t < 0 || o.r < 0 || o.b < 0)
        throw std::invalid_argument("centerness_target: negative offset");
    const double mlr = std::max(o.l, o.r);
    const double mtb = std::max(o.t, o.b);
    if (mlr <= 0 || mtb <= 0)
        throw std::invalid_argument("centerness_target: degenerate box (zero extent)");
    return std::sqrt((std::min(o.l, o.r) / mlr) * (std::min(o.t, o.b) / mtb));
}

LtrbOffsets encode_ltrb(double cx, double cy, const BoundingBox& gt) {
    if (!gt.contains(cx, cy))
        throw std::invalid_argument("encode_ltrb: centre outside the box");
    return {cx - gt.x1, cy - gt.y1, gt.x2 - cx, gt.y2 - cy};
}

BoundingBox decode_ltrb(double cx, double cy, const LtrbOffsets& o) {
    return BoundingBox(cx - o.l, cy - o.t, cx + o.r, cy + o.b);
}

std::vector<AnchorPoint> make_anchor_grid(const std::vector<std::pair<int, int>>& level_dims,
                                          const std::vector<double>& strides) {
    std::vector<AnchorPoint> anchors;
    for (size_t lvl = 0; lvl < level_dims.size(); ++lvl) {
        const auto [h, w] = level_dims[lvl];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                anchors.push_back({static_cast<int>(lvl), y, x, strides[lvl]});
    }
    return anchors;
}

std::vector<RpnTarget> assign_rpn_targets(const std::vector<AnchorPoint>& anchors,
                                          const std::vector<BoundingBox>& gts, int sample_size,
                                          std::mt19937_64& rng) {
    std::vector<RpnTarget> inside;
    for (const auto& a : anchors) {
        const double cx = a.cx(), cy = a.cy();
        int best = -1;
        double best_d2 = 0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (!gts[g].contains(cx, cy)) continue;
            const double dx = cx - gts[g].cx(), dy = cy - gts[g].cy();
            const double d2 = dx * dx + dy * dy;
            if (best < 0 || d2 < best_d2) {
                best = static_cast<int>(g);
                best_d2 = d2;
            }
        }
        if (best < 0) continue;
        const LtrbOffsets o = encode_ltrb(cx, cy, gts[static_cast<size_t>(best)]);
        RpnTarget t;
        t.anchor = a;
        t.ctr_target = centerness_target(o);
        t.ltrb_norm = {o.l / a.stride, o.t / a.stride, o.r / a.stride, o.b / a.stride};
        inside.push_back(t);
    }
    if (static_cast<int>(inside.size()) <= sample_size) return inside;
    std::shuffle(inside.begin(), inside.end(), rng);
    inside.resize(static_cast<size_t>(sample_size));
    return inside;
}

std::array<double, 4> encode_box_delta(const BoundingBox& proposal, const BoundingBox& gt) {
    const double pw = proposal.width(), ph = proposal.height();
    return {(gt.cx() - proposal.cx()) / pw, (gt.cy() - proposal.cy()) / ph,
            std::log(gt.width() / pw), std::log(gt.height() / ph)};
}

BoundingBox decode_box_delta(const BoundingBox& proposal, const std::array<double, 4>& delta) {
    const double pw = proposal.width(), ph = proposal.height();
    const double cx = proposal.cx() + delta[0] * pw;
    const double cy = proposal.cy() + delta[1] * ph;
    const double w = pw * std::exp(std::clamp(delta[2], -4.0, 4.0));
    const double h = ph * std::exp(std::clamp(delta[3], -4.0, 4.0));
    return BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2);
}

RoiAssignment assign_roi_target(const BoundingBox& proposal,
                                const std::vector<Annotation>& gts,
                                const std::vector<int>& dense_of_class, int background_index,
                                double pos_iou, double neg_iou) {
    RoiAssignment out;
    for (size_t g = 0; g < gts.size(); ++g) {
        const double v = iou(proposal, gts[g].box);
        if (v > out.max_iou) out.max_iou = v;
        if (v > out.matched_iou) {
            out.matched_iou = v;
            out.matched_gt = static_cast<int>(g);
        }
    }
    if (out.matched_iou >= pos_iou) {
        out.cls_target = dense_of_class[static_cast<size_t>(out.matched_gt)];
    } else if (out.max_iou < neg_iou) {
        out.cls_target = background_index;
        out.matched_gt = -1;
    } else {
        out.cls_target = -1; // in-between band: ignored
        out.matched_gt = -1;
    }
    return out;
}

} // namespace owdet
