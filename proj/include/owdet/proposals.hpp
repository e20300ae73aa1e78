#pragma once

#include <algorithm>
#include <vector>

#include "owdet/net.hpp"
#include "owdet/targets.hpp"

namespace owdet::nn {

/// A decoded region proposal. The centerness logit rides along because the
/// objectness score of the downstream region reuses it.
struct Proposal {
    BoundingBox box;
    double ctr_logit = 0;
    int level = 0;
};

struct ProposalOptions {
    int pre_nms_topk = 0;    // per level, 0 = keep all
    double nms_iou = 1.0;    // >= 1 disables suppression
};

/// Top-k proposals ranked by centerness. Boxes decode from the ltrb head
/// (softplus(raw) * stride) and are clipped to the image. Ties break on
/// anchor order so the ranking is deterministic.
template <typename T>
std::vector<Proposal> select_proposals(const RpnActs<T>& rpn, const NetShape& shape, int k,
                                       const ProposalOptions& opt = {}) {
    if (k < 1) throw std::invalid_argument("select_proposals: k must be >= 1");
    const double strides[2] = {4.0, 8.0};
    std::vector<Proposal> all;
    for (int lvl = 0; lvl < 2; ++lvl) {
        const int H = rpn.ctr[lvl].shape[1], W = rpn.ctr[lvl].shape[2];
        std::vector<Proposal> level_props;
        level_props.reserve(static_cast<size_t>(H) * W);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double cx = (x + 0.5) * strides[lvl];
                const double cy = (y + 0.5) * strides[lvl];
                LtrbOffsets o;
                o.l = static_cast<double>(softplus(rpn.box_raw[lvl].at(0, y, x))) * strides[lvl];
                o.t = static_cast<double>(softplus(rpn.box_raw[lvl].at(1, y, x))) * strides[lvl];
                o.r = static_cast<double>(softplus(rpn.box_raw[lvl].at(2, y, x))) * strides[lvl];
                o.b = static_cast<double>(softplus(rpn.box_raw[lvl].at(3, y, x))) * strides[lvl];
                Proposal p;
                p.level = lvl;
                p.ctr_logit = static_cast<double>(rpn.ctr[lvl].at(0, y, x));
                p.box = decode_ltrb(cx, cy, o).clipped(shape.image_size, shape.image_size);
                level_props.push_back(p);
            }
        std::stable_sort(level_props.begin(), level_props.end(),
                         [](const Proposal& a, const Proposal& b) { return a.ctr_logit > b.ctr_logit; });
        if (opt.pre_nms_topk > 0 && static_cast<int>(level_props.size()) > opt.pre_nms_topk)
            level_props.resize(static_cast<size_t>(opt.pre_nms_topk));
        all.insert(all.end(), level_props.begin(), level_props.end());
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Proposal& a, const Proposal& b) { return a.ctr_logit > b.ctr_logit; });
    if (opt.nms_iou < 1.0) {
        std::vector<Proposal> kept;
        for (const auto& p : all) {
            bool drop = false;
            for (const auto& q : kept)
                if (iou(p.box, q.box) > opt.nms_iou) { drop = true; break; }
            if (!drop) kept.push_back(p);
            if (static_cast<int>(kept.size()) >= k) break;
        }
        return kept;
    }
    if (static_cast<int>(all.size()) > k) all.resize(static_cast<size_t>(k));
    return all;
}

} // namespace owdet::nn
