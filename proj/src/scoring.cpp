#include "owdet/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "owdet/gmm.hpp"
#include "owdet/targets.hpp"

namespace owdet {

void Thresholds::validate() const {
    auto check = [](double v, const char* name) {
        if (!(v > 0.0 && v < 1.0))
            throw std::invalid_argument(std::string(name) + " must lie in (0,1)");
    };
    check(theta_obj, "theta_obj");
    check(theta_cls, "theta_cls");
    check(theta_conf, "theta_conf");
    check(baseline_unknown, "baseline_unknown");
}

double objectness(double ctr_logit, double iou_logit) {
    if (!std::isfinite(ctr_logit) || !std::isfinite(iou_logit))
        throw std::invalid_argument("objectness: non-finite logit");
    auto sig = [](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    };
    return std::sqrt(sig(ctr_logit) * sig(iou_logit));
}

int ClassScores::argmax() const {
    int best = 0;
    double best_score = known.empty() ? -1.0 : known[0];
    for (int k = 1; k < known_count(); ++k)
        if (known[static_cast<size_t>(k)] > best_score) {
            best = k;
            best_score = known[static_cast<size_t>(k)];
        }
    if (unknown > best_score) {
        best = known_count();
        best_score = unknown;
    }
    if (background > best_score) best = known_count() + 1;
    return best;
}

ClassScores calculate_class_scores_and_boxes(const RegionOutput& region, double s_obj,
                                             const Thresholds& th, int known_count,
                                             double image_w, double image_h,
                                             bool unknown_branch_enabled) {
    if (static_cast<int>(region.cls_logits.size()) != known_count + 1)
        throw std::invalid_argument("calculate_class_scores_and_boxes: logit width mismatch");

    ClassScores cs;
    // softmax over known + background
    double mx = *std::max_element(region.cls_logits.begin(), region.cls_logits.end());
    double denom = 0;
    std::vector<double> e(region.cls_logits.size());
    for (size_t i = 0; i < e.size(); ++i) {
        e[i] = std::exp(region.cls_logits[i] - mx);
        denom += e[i];
    }
    cs.known.resize(static_cast<size_t>(known_count));
    for (int k = 0; k < known_count; ++k) cs.known[static_cast<size_t>(k)] = e[static_cast<size_t>(k)] / denom;
    cs.background = e.back() / denom;
    cs.unknown = 0.0;

    cs.known_boxes.resize(static_cast<size_t>(known_count));
    for (int k = 0; k < known_count; ++k) {
        std::array<double, 4> delta{};
        for (int c = 0; c < 4; ++c)
            delta[static_cast<size_t>(c)] = region.clsbox[static_cast<size_t>(4 * k + c)];
        cs.known_boxes[static_cast<size_t>(k)] =
            decode_box_delta(region.proposal, delta).clipped(image_w, image_h);
    }
    cs.unknown_box = decode_box_delta(region.proposal, region.agnbox).clipped(image_w, image_h);

    if (unknown_branch_enabled) {
        bool all_low = true;
        for (double s : cs.known)
            if (s >= th.theta_conf) { all_low = false; break; }
        if (all_low && s_obj > th.theta_obj) {
            cs.unknown = s_obj;
            cs.background = 0.0;
        }
    }
    return cs;
}

OverconfidenceResult handle_overconfident(int dense_class, double s_cls,
                                          const RegionOutput& region, double s_obj,
                                          const GmmStore& gmms, const Thresholds& th,
                                          const std::vector<int>& known_ids) {
    OverconfidenceResult r;
    if (s_cls >= th.theta_cls) return r;
    const int class_id = known_ids[static_cast<size_t>(dense_class)];
    if (!gmms.has(class_id)) {
        r.mixture_missing = true;
        return r;
    }
    const auto& entry = gmms.at(class_id);
    r.s_like = entry.mixture.log_pdf(region.cls_logits);
    if (r.s_like < entry.theta_like) {
        r.relabeled = true;
        r.score = s_obj;
    }
    return r;
}

} // namespace owdet
