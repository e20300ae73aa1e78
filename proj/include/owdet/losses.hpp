#pragma once

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "owdet/net.hpp"
#include "owdet/proposals.hpp"
#include "owdet/targets.hpp"

namespace owdet::nn {

/// Per-head loss terms. The classification term carries a fixed 3x weight
/// in the total; every other head uses a plain l1 term.
struct LossBreakdown {
    double ctr = 0, box = 0, cls = 0, clsbox = 0, agnbox = 0, iou = 0;
    double total() const { return ctr + box + 3.0 * cls + clsbox + agnbox + iou; }
};

/// One region with its frozen supervision. Target assignment, the exclusion
/// mask, and the IoU-head target are all decided when the structure is
/// captured; the loss is then a smooth function of the parameters.
struct RoiTargetSample {
    BoundingBox box;
    int level = 0;
    double ctr_logit = 0;    // from the originating proposal
    int cls_target = -1;     // dense class, background index, or -1 = ignored
    int matched_gt = -1;
    double max_iou = 0;      // against all gts, for the exclusion mask
    std::array<double, 4> delta_target{};
    double iou_target = 0;   // realized IoU of the decoded agnostic box (stop-grad)
    bool masked = false;     // excluded from the classification loss only
};

struct TrainStructure {
    std::vector<RpnTarget> rpn_samples;
    std::vector<RoiTargetSample> rois;
};

struct CaptureConfig {
    int anchor_samples = 96;
    int proposals = 64;
    int pre_nms_topk = 256;
    double rpn_nms_iou = 0.7;
    bool add_gt_proposals = true;
    double pos_iou = 0.5;
    double neg_iou = 0.3;
    double theta_cls = 0.5;
    double theta_obj = 0.69;
    bool prior_class_handling = true;
};

template <typename T>
struct LossGrads {
    Tensor<T> dctr[2], dbox[2];               // map-shaped, zeros off the sampled anchors
    Tensor<T> dcls, dclsbox, dagnbox, diou;   // matrix-shaped like RoIOutputs
};

template <typename T>
struct ImagePass {
    BackboneActs<T> bb;
    RpnActs<T> rpn;
    RoiActs<T> roi;
    RoIOutputs<T> out;
    std::vector<Proposal> proposals;
};

namespace detail {

template <typename T>
std::vector<double> softmax_row(const Tensor<T>& m, int row, int width) {
    double mx = -1e300;
    for (int c = 0; c < width; ++c)
        mx = std::max(mx, static_cast<double>(m[static_cast<size_t>(row) * width + c]));
    std::vector<double> p(static_cast<size_t>(width));
    double denom = 0;
    for (int c = 0; c < width; ++c) {
        p[static_cast<size_t>(c)] =
            std::exp(static_cast<double>(m[static_cast<size_t>(row) * width + c]) - mx);
        denom += p[static_cast<size_t>(c)];
    }
    for (auto& v : p) v /= denom;
    return p;
}

inline double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

} // namespace detail

/// Masked regions are dropped from the classification loss only: a region is
/// excluded iff its best prior-class softmax score beats theta_cls, its
/// objectness beats theta_obj, and it overlaps no ground-truth box at all.
template <typename T>
std::vector<bool> build_exclusion_mask(const RoIOutputs<T>& out, const std::vector<double>& s_obj,
                                       const std::vector<double>& max_iou_vs_gts,
                                       const std::vector<int>& prior_dense, double theta_cls,
                                       double theta_obj) {
    const int n = out.cls.shape[0];
    const int width = out.known + 1;
    std::vector<bool> mask(static_cast<size_t>(n), false);
    if (prior_dense.empty()) return mask;
    for (int i = 0; i < n; ++i) {
        if (max_iou_vs_gts[static_cast<size_t>(i)] > 0.0) continue;
        const auto p = detail::softmax_row(out.cls, i, width);
        double best_prior = 0;
        for (int c : prior_dense) best_prior = std::max(best_prior, p[static_cast<size_t>(c)]);
        if (best_prior > theta_cls && s_obj[static_cast<size_t>(i)] > theta_obj)
            mask[static_cast<size_t>(i)] = true;
    }
    return mask;
}

/// Runs the forward pipeline on one labeled image and freezes every discrete
/// training decision: sampled RPN anchors, proposal boxes (detached), RoI
/// assignments, IoU-head targets, and the prior-class exclusion mask.
template <typename T>
TrainStructure capture_structure(const DetectorNet<T>& net, const ImageRecord& record,
                                 const std::vector<int>& gt_dense,
                                 const std::vector<int>& prior_dense, const CaptureConfig& cfg,
                                 std::mt19937_64& rng, ImagePass<T>& pass) {
    TrainStructure s;
    pass.bb = BackboneActs<T>{};
    net.backbone_forward(net.to_input(record.raster), pass.bb);
    net.rpn_forward(pass.bb, pass.rpn);

    std::vector<BoundingBox> gt_boxes;
    for (const auto& a : record.annotations) gt_boxes.push_back(a.box);

    const auto anchors = make_anchor_grid(net.level_dims(), net.strides());
    s.rpn_samples = assign_rpn_targets(anchors, gt_boxes, cfg.anchor_samples, rng);

    ProposalOptions popt;
    popt.pre_nms_topk = cfg.pre_nms_topk;
    popt.nms_iou = cfg.rpn_nms_iou;
    pass.proposals = select_proposals(pass.rpn, net.shape, cfg.proposals, popt);
    if (cfg.add_gt_proposals)
        for (const auto& b : gt_boxes)
            pass.proposals.push_back({b.clipped(net.shape.image_size, net.shape.image_size), 0.0,
                                      net.level_for_box(b)});

    std::vector<BoundingBox> boxes;
    for (const auto& p : pass.proposals) boxes.push_back(p.box);
    pass.out = net.roi_forward(pass.bb, boxes, pass.roi);

    const int background = net.num_known;
    std::vector<double> s_obj_all, max_iou_all;
    for (size_t i = 0; i < pass.proposals.size(); ++i) {
        const auto& prop = pass.proposals[i];
        RoiTargetSample ts;
        ts.box = prop.box;
        ts.level = prop.level;
        ts.ctr_logit = prop.ctr_logit;
        const RoiAssignment asg =
            assign_roi_target(prop.box, record.annotations, gt_dense, background, cfg.pos_iou,
                              cfg.neg_iou);
        ts.cls_target = asg.cls_target;
        ts.matched_gt = asg.matched_gt;
        ts.max_iou = asg.max_iou;
        if (asg.matched_gt >= 0 && asg.cls_target >= 0 && asg.cls_target < background) {
            const BoundingBox& gt = record.annotations[static_cast<size_t>(asg.matched_gt)].box;
            ts.delta_target = encode_box_delta(prop.box, gt);
            std::array<double, 4> pred{};
            for (int c = 0; c < 4; ++c)
                pred[static_cast<size_t>(c)] =
                    static_cast<double>(pass.out.agnbox[i * 4 + static_cast<size_t>(c)]);
            ts.iou_target = iou(decode_box_delta(prop.box, pred), gt);
        }
        const double so =
            std::sqrt(sigmoid(ts.ctr_logit) *
                      sigmoid(static_cast<double>(pass.out.iou[i])));
        s_obj_all.push_back(so);
        max_iou_all.push_back(ts.max_iou);
        s.rois.push_back(ts);
    }

    if (cfg.prior_class_handling && !prior_dense.empty()) {
        const auto mask = build_exclusion_mask(pass.out, s_obj_all, max_iou_all, prior_dense,
                                               cfg.theta_cls, cfg.theta_obj);
        for (size_t i = 0; i < mask.size(); ++i) s.rois[i].masked = mask[i];
    }
    return s;
}

/// Loss (and, when grads != nullptr, gradients at the head outputs) for one
/// image under a frozen structure. Reduction is the mean over the scalar
/// residuals of each term's supervised set; empty sets contribute zero.
template <typename T>
LossBreakdown compute_losses(const RpnActs<T>& rpn, const RoIOutputs<T>& out,
                             const TrainStructure& s, LossGrads<T>* grads = nullptr) {
    LossBreakdown lb;
    if (grads) {
        for (int lvl = 0; lvl < 2; ++lvl) {
            grads->dctr[lvl] = Tensor<T>(rpn.ctr[lvl].shape);
            grads->dbox[lvl] = Tensor<T>(rpn.box_raw[lvl].shape);
        }
        grads->dcls = Tensor<T>(out.cls.shape);
        grads->dclsbox = Tensor<T>(out.clsbox.shape);
        grads->dagnbox = Tensor<T>(out.agnbox.shape);
        grads->diou = Tensor<T>(out.iou.shape);
    }

    // RPN terms
    const size_t n_anchor = s.rpn_samples.size();
    if (n_anchor > 0) {
        for (const auto& t : s.rpn_samples) {
            const int lvl = t.anchor.level, y = t.anchor.y, x = t.anchor.x;
            const double logit = static_cast<double>(rpn.ctr[lvl].at(0, y, x));
            const double p = sigmoid(logit);
            const double r = p - t.ctr_target;
            lb.ctr += std::abs(r) / static_cast<double>(n_anchor);
            if (grads)
                grads->dctr[lvl].at(0, y, x) += static_cast<T>(
                    detail::sign(r) * p * (1.0 - p) / static_cast<double>(n_anchor));
            for (int c = 0; c < 4; ++c) {
                const double raw = static_cast<double>(rpn.box_raw[lvl].at(c, y, x));
                const double pred = softplus(raw);
                const double rb = pred - t.ltrb_norm[static_cast<size_t>(c)];
                lb.box += std::abs(rb) / static_cast<double>(4 * n_anchor);
                if (grads)
                    grads->dbox[lvl].at(c, y, x) += static_cast<T>(
                        detail::sign(rb) * sigmoid(raw) / static_cast<double>(4 * n_anchor));
            }
        }
    }

    // RoI terms
    const int width = out.known + 1;
    size_t n_cls = 0, n_pos = 0;
    for (const auto& roi : s.rois) {
        if (roi.cls_target >= 0 && !roi.masked) ++n_cls;
        if (roi.cls_target >= 0 && roi.cls_target < out.known) ++n_pos;
    }
    for (size_t i = 0; i < s.rois.size(); ++i) {
        const auto& roi = s.rois[i];
        if (roi.cls_target >= 0 && !roi.masked && n_cls > 0) {
            const auto p = detail::softmax_row(out.cls, static_cast<int>(i), width);
            lb.cls += -std::log(std::max(p[static_cast<size_t>(roi.cls_target)], 1e-300)) /
                      static_cast<double>(n_cls);
            if (grads)
                for (int c = 0; c < width; ++c) {
                    const double onehot = (c == roi.cls_target) ? 1.0 : 0.0;
                    // the 3x classification weight enters the output gradient here
                    grads->dcls[i * static_cast<size_t>(width) + static_cast<size_t>(c)] +=
                        static_cast<T>(3.0 * (p[static_cast<size_t>(c)] - onehot) /
                                       static_cast<double>(n_cls));
                }
        }
        if (roi.cls_target >= 0 && roi.cls_target < out.known && n_pos > 0) {
            // class-specific box: supervised on the target-class channel only
            const size_t base = i * static_cast<size_t>(4 * out.known) +
                                static_cast<size_t>(4 * roi.cls_target);
            for (int c = 0; c < 4; ++c) {
                const double r = static_cast<double>(out.clsbox[base + static_cast<size_t>(c)]) -
                                 roi.delta_target[static_cast<size_t>(c)];
                lb.clsbox += std::abs(r) / static_cast<double>(4 * n_pos);
                if (grads)
                    grads->dclsbox[base + static_cast<size_t>(c)] +=
                        static_cast<T>(detail::sign(r) / static_cast<double>(4 * n_pos));
            }
            for (int c = 0; c < 4; ++c) {
                const double r = static_cast<double>(out.agnbox[i * 4 + static_cast<size_t>(c)]) -
                                 roi.delta_target[static_cast<size_t>(c)];
                lb.agnbox += std::abs(r) / static_cast<double>(4 * n_pos);
                if (grads)
                    grads->dagnbox[i * 4 + static_cast<size_t>(c)] +=
                        static_cast<T>(detail::sign(r) / static_cast<double>(4 * n_pos));
            }
            const double logit = static_cast<double>(out.iou[i]);
            const double p = sigmoid(logit);
            const double r = p - roi.iou_target;
            lb.iou += std::abs(r) / static_cast<double>(n_pos);
            if (grads)
                grads->diou[i] +=
                    static_cast<T>(detail::sign(r) * p * (1.0 - p) / static_cast<double>(n_pos));
        }
    }
    return lb;
}

/// Loss under a frozen structure with a fresh forward pass; the finite-
/// difference gradient oracle perturbs parameters and calls this.
template <typename T>
LossBreakdown loss_for_image(const DetectorNet<T>& net, const ImageRecord& record,
                             const TrainStructure& s) {
    BackboneActs<T> bb;
    net.backbone_forward(net.to_input(record.raster), bb);
    RpnActs<T> rpn;
    net.rpn_forward(bb, rpn);
    std::vector<BoundingBox> boxes;
    for (const auto& roi : s.rois) boxes.push_back(roi.box);
    RoiActs<T> roi_acts;
    const RoIOutputs<T> out = net.roi_forward(bb, boxes, roi_acts);
    return compute_losses(rpn, out, s);
}

/// Backward pass for one image whose forward state is in `pass`; gradients
/// accumulate into the net's parameter-gradient buffers.
template <typename T>
LossBreakdown backprop_image(DetectorNet<T>& net, const ImagePass<T>& pass,
                             const TrainStructure& s) {
    LossGrads<T> g;
    const LossBreakdown lb = compute_losses(pass.rpn, pass.out, s, &g);
    Tensor<T> dp4({net.shape.fpn, net.shape.h4(), net.shape.h4()});
    Tensor<T> dp8({net.shape.fpn, net.shape.h8(), net.shape.h8()});
    net.roi_backward(pass.roi, g.dcls, g.dclsbox, g.dagnbox, g.diou, dp4, dp8);
    net.rpn_backward(pass.rpn, g.dctr, g.dbox, dp4, dp8);
    net.backbone_backward(pass.bb, dp4, dp8);
    return lb;
}

} // namespace owdet::nn
