#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "owdet/dataset.hpp"
#include "owdet/gmm.hpp"
#include "owdet/net.hpp"
#include "owdet/nms.hpp"
#include "owdet/proposals.hpp"
#include "owdet/scoring.hpp"

namespace owdet {

struct DetectConfig {
    int k_proposals = 128;
    int pre_nms_topk = 256;
    double rpn_nms_iou = 0.7;
    double nms_iou = 0.4;
    double score_floor = 0.05;
    int max_detections = 100;
    bool class_agnostic_detection = true; // unknown branch of the score calculation
    bool gmm_correction = true;           // overconfidence handling
};

namespace detail {

template <typename T>
RegionOutput region_output(const nn::RoIOutputs<T>& out, const nn::Proposal& prop, size_t i) {
    RegionOutput r;
    const int width = out.known + 1;
    r.cls_logits.resize(static_cast<size_t>(width));
    for (int c = 0; c < width; ++c)
        r.cls_logits[static_cast<size_t>(c)] =
            static_cast<double>(out.cls[i * static_cast<size_t>(width) + static_cast<size_t>(c)]);
    r.clsbox.resize(static_cast<size_t>(4 * out.known));
    for (int c = 0; c < 4 * out.known; ++c)
        r.clsbox[static_cast<size_t>(c)] = static_cast<double>(
            out.clsbox[i * static_cast<size_t>(4 * out.known) + static_cast<size_t>(c)]);
    for (int c = 0; c < 4; ++c)
        r.agnbox[static_cast<size_t>(c)] = static_cast<double>(out.agnbox[i * 4 + static_cast<size_t>(c)]);
    r.iou_logit = static_cast<double>(out.iou[i]);
    r.ctr_logit = prop.ctr_logit;
    r.proposal = prop.box;
    return r;
}

} // namespace detail

/// Full open-world pipeline on one raster: proposals by centerness, RoI
/// heads, per-region class scores, overconfidence correction, NMS, score
/// floor. Background regions are never emitted.
template <typename T>
std::vector<Detection> detect(const nn::DetectorNet<T>& net, const Raster& raster,
                              const GmmStore& gmms, const std::vector<int>& known_ids,
                              const Thresholds& th, const DetectConfig& dc) {
    nn::BackboneActs<T> bb;
    net.backbone_forward(net.to_input(raster), bb);
    nn::RpnActs<T> rpn;
    net.rpn_forward(bb, rpn);
    nn::ProposalOptions popt;
    popt.pre_nms_topk = dc.pre_nms_topk;
    popt.nms_iou = dc.rpn_nms_iou;
    const auto proposals = nn::select_proposals(rpn, net.shape, dc.k_proposals, popt);

    std::vector<BoundingBox> boxes;
    for (const auto& p : proposals) boxes.push_back(p.box);
    nn::RoiActs<T> roi_acts;
    const nn::RoIOutputs<T> out = net.roi_forward(bb, boxes, roi_acts);

    const double W = raster.width, H = raster.height;
    std::vector<Detection> raw;
    for (size_t i = 0; i < proposals.size(); ++i) {
        const RegionOutput region = detail::region_output(out, proposals[i], i);
        const double s_obj = objectness(region.ctr_logit, region.iou_logit);
        const ClassScores cs = calculate_class_scores_and_boxes(
            region, s_obj, th, out.known, W, H, dc.class_agnostic_detection);
        const int arg = cs.argmax();
        if (arg == cs.known_count() + 1) continue; // background
        Detection det;
        if (arg == cs.known_count()) {
            det.label = UNKNOWN_CLASS;
            det.score = cs.unknown;
            det.box = cs.unknown_box;
            det.provenance = Detection::Provenance::objectness;
        } else {
            det.label = known_ids[static_cast<size_t>(arg)];
            det.score = cs.known[static_cast<size_t>(arg)];
            det.box = cs.known_boxes[static_cast<size_t>(arg)];
            det.provenance = Detection::Provenance::classifier;
            if (dc.gmm_correction) {
                const auto r = handle_overconfident(arg, det.score, region, s_obj, gmms, th, known_ids);
                if (r.relabeled) {
                    det.label = UNKNOWN_CLASS;
                    det.score = r.score;
                    det.provenance = Detection::Provenance::objectness;
                    // box stays the class-specific one
                }
            }
        }
        raw.push_back(det);
    }

    std::vector<Detection> kept = nms(raw, dc.nms_iou);
    std::vector<Detection> final_dets;
    for (const auto& d : kept)
        if (d.score >= dc.score_floor) final_dets.push_back(d);
    if (static_cast<int>(final_dets.size()) > dc.max_detections)
        final_dets.resize(static_cast<size_t>(dc.max_detections));
    return final_dets;
}

/// Conventional classifier path: softmax argmax per region, NMS, then any
/// known detection under the baseline threshold is relabeled unknown with
/// its score kept.
template <typename T>
std::vector<Detection> baseline_threshold_detect(const nn::DetectorNet<T>& net,
                                                 const Raster& raster,
                                                 const std::vector<int>& known_ids,
                                                 const Thresholds& th, const DetectConfig& dc) {
    nn::BackboneActs<T> bb;
    net.backbone_forward(net.to_input(raster), bb);
    nn::RpnActs<T> rpn;
    net.rpn_forward(bb, rpn);
    nn::ProposalOptions popt;
    popt.pre_nms_topk = dc.pre_nms_topk;
    popt.nms_iou = dc.rpn_nms_iou;
    const auto proposals = nn::select_proposals(rpn, net.shape, dc.k_proposals, popt);
    std::vector<BoundingBox> boxes;
    for (const auto& p : proposals) boxes.push_back(p.box);
    nn::RoiActs<T> roi_acts;
    const nn::RoIOutputs<T> out = net.roi_forward(bb, boxes, roi_acts);

    const double W = raster.width, H = raster.height;
    std::vector<Detection> raw;
    for (size_t i = 0; i < proposals.size(); ++i) {
        const RegionOutput region = detail::region_output(out, proposals[i], i);
        // plain softmax scores; the unknown branch never fires here
        Thresholds plain = th;
        const ClassScores cs =
            calculate_class_scores_and_boxes(region, 0.0, plain, out.known, W, H, false);
        const int arg = cs.argmax();
        if (arg >= cs.known_count()) continue; // background (unknown score is always 0)
        Detection det;
        det.label = known_ids[static_cast<size_t>(arg)];
        det.score = cs.known[static_cast<size_t>(arg)];
        det.box = cs.known_boxes[static_cast<size_t>(arg)];
        det.provenance = Detection::Provenance::classifier;
        raw.push_back(det);
    }
    std::vector<Detection> kept = nms(raw, dc.nms_iou);
    std::vector<Detection> final_dets;
    for (auto& d : kept) {
        if (d.score < dc.score_floor) continue;
        if (d.score < th.baseline_unknown) d.label = UNKNOWN_CLASS; // score kept
        final_dets.push_back(d);
    }
    if (static_cast<int>(final_dets.size()) > dc.max_detections)
        final_dets.resize(static_cast<size_t>(dc.max_detections));
    return final_dets;
}

/// Classification logits with ground-truth boxes as the region proposals,
/// bucketed by class id; the training source for the per-class mixtures.
template <typename T>
std::map<int, std::vector<std::vector<double>>> collect_gt_logits(
    const nn::DetectorNet<T>& net, const std::vector<ImageRecord>& records) {
    std::map<int, std::vector<std::vector<double>>> per_class;
    for (const auto& rec : records) {
        if (rec.annotations.empty()) continue;
        nn::BackboneActs<T> bb;
        net.backbone_forward(net.to_input(rec.raster), bb);
        std::vector<BoundingBox> boxes;
        for (const auto& a : rec.annotations)
            boxes.push_back(a.box.clipped(net.shape.image_size, net.shape.image_size));
        nn::RoiActs<T> roi_acts;
        const nn::RoIOutputs<T> out = net.roi_forward(bb, boxes, roi_acts);
        const int width = out.known + 1;
        for (size_t i = 0; i < rec.annotations.size(); ++i) {
            std::vector<double> logits(static_cast<size_t>(width));
            for (int c = 0; c < width; ++c)
                logits[static_cast<size_t>(c)] = static_cast<double>(
                    out.cls[i * static_cast<size_t>(width) + static_cast<size_t>(c)]);
            per_class[rec.annotations[i].class_id].push_back(std::move(logits));
        }
    }
    return per_class;
}

/// Detection dump (JSON lines): image_id, label ("unknown" or category id),
/// score, box [x,y,w,h], provenance flag.
void write_detection_dump(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, Detection>>& dets);
std::vector<std::pair<std::string, Detection>> read_detection_dump(
    const std::filesystem::path& path);

} // namespace owdet
