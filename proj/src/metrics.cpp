#include "owdet/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace owdet {

using nlohmann::json;

std::vector<MatchOutcome> match_detections(const std::vector<Detection>& dets,
                                           const std::vector<BoundingBox>& gts, double iou_thr) {
    std::vector<bool> taken(gts.size(), false);
    std::vector<MatchOutcome> out(dets.size());
    for (size_t i = 0; i < dets.size(); ++i) {
        int best = -1;
        double best_iou = 0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double v = iou(dets[i].box, gts[g]);
            if (v >= iou_thr && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            taken[static_cast<size_t>(best)] = true;
            out[i] = {true, best, best_iou};
        }
    }
    return out;
}

EvalFrame build_eval_frame(const std::vector<ImageRecord>& records,
                           const std::map<std::string, std::vector<Detection>>& dets_by_image,
                           const ClassRegistry& registry, double iou_thr) {
    const auto known = registry.known();
    const std::set<int> known_set(known.begin(), known.end());
    const auto pool = registry.unknown_pool();
    const std::set<int> pool_set(pool.begin(), pool.end());

    EvalFrame frame;
    frame.iou_thr = iou_thr;
    for (const auto& rec : records) {
        EvalImage img;
        img.image_id = rec.image_id;
        for (const auto& a : rec.annotations) {
            if (known_set.count(a.class_id))
                img.known_gts.push_back(a);
            else if (pool_set.count(a.class_id))
                img.unknown_gts.push_back(a.box);
            // classes outside the schedule are unscoreable and excluded
        }
        if (auto it = dets_by_image.find(rec.image_id); it != dets_by_image.end())
            img.detections = it->second;
        frame.images.push_back(std::move(img));
    }
    return frame;
}

std::optional<double> average_precision_voc2010(std::vector<std::pair<double, bool>> scored,
                                                long long gt_count) {
    if (gt_count <= 0) return std::nullopt;
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const size_t n = scored.size();
    std::vector<double> precision(n), recall(n);
    long long tp = 0;
    for (size_t i = 0; i < n; ++i) {
        if (scored[i].second) ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
    }
    // non-increasing envelope from the right
    for (size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0, prev_recall = 0;
    for (size_t i = 0; i < n; ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

namespace {

struct PooledDet {
    double score;
    bool tp;
    bool hits_unknown; // overlaps an unknown-pool gt at/above the threshold
};

/// Per-image, per-class greedy matching in global score order; returns the
/// pooled known-class detection stream.
std::vector<PooledDet> pooled_known_stream(const EvalFrame& frame) {
    struct Ref {
        size_t image;
        size_t det;
        double score;
    };
    std::vector<Ref> refs;
    for (size_t i = 0; i < frame.images.size(); ++i)
        for (size_t d = 0; d < frame.images[i].detections.size(); ++d)
            if (frame.images[i].detections[d].label != UNKNOWN_CLASS)
                refs.push_back({i, d, frame.images[i].detections[d].score});
    std::stable_sort(refs.begin(), refs.end(),
                     [](const Ref& a, const Ref& b) { return a.score > b.score; });

    // matched flags per (image, gt index)
    std::vector<std::vector<bool>> taken(frame.images.size());
    for (size_t i = 0; i < frame.images.size(); ++i)
        taken[i].assign(frame.images[i].known_gts.size(), false);

    std::vector<PooledDet> stream;
    for (const auto& ref : refs) {
        const auto& img = frame.images[ref.image];
        const auto& det = img.detections[ref.det];
        int best = -1;
        double best_iou = 0;
        for (size_t g = 0; g < img.known_gts.size(); ++g) {
            if (taken[ref.image][g]) continue;
            if (img.known_gts[g].class_id != det.label) continue;
            const double v = iou(det.box, img.known_gts[g].box);
            if (v >= frame.iou_thr && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        PooledDet p{ref.score, false, false};
        if (best >= 0) {
            taken[ref.image][static_cast<size_t>(best)] = true;
            p.tp = true;
        }
        for (const auto& ub : img.unknown_gts)
            if (iou(det.box, ub) >= frame.iou_thr) {
                p.hits_unknown = true;
                break;
            }
        stream.push_back(p);
    }
    return stream;
}

long long known_gt_total(const EvalFrame& frame) {
    long long n = 0;
    for (const auto& img : frame.images) n += static_cast<long long>(img.known_gts.size());
    return n;
}

std::optional<double> precision_at_recall(const std::vector<PooledDet>& stream, long long gt_total,
                                          double level) {
    if (gt_total <= 0) return std::nullopt;
    long long tp = 0;
    for (size_t i = 0; i < stream.size(); ++i) {
        if (stream[i].tp) ++tp;
        const double recall = static_cast<double>(tp) / static_cast<double>(gt_total);
        if (recall >= level)
            return static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    return std::nullopt; // recall level unreachable
}

} // namespace

std::optional<double> per_class_ap(const EvalFrame& frame, int class_id) {
    long long gt_count = 0;
    std::vector<std::pair<double, bool>> scored;
    // match per image in score order, one-to-one within the class
    for (const auto& img : frame.images) {
        std::vector<Detection> dets;
        for (const auto& d : img.detections)
            if (d.label == class_id) dets.push_back(d);
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        std::vector<BoundingBox> gts;
        for (const auto& g : img.known_gts)
            if (g.class_id == class_id) gts.push_back(g.box);
        gt_count += static_cast<long long>(gts.size());
        const auto outcomes = match_detections(dets, gts, frame.iou_thr);
        for (size_t i = 0; i < dets.size(); ++i) scored.emplace_back(dets[i].score, outcomes[i].tp);
    }
    return average_precision_voc2010(std::move(scored), gt_count);
}

std::optional<double> u_recall(const EvalFrame& frame) {
    long long pool = 0, matched = 0;
    for (const auto& img : frame.images) {
        pool += static_cast<long long>(img.unknown_gts.size());
        std::vector<Detection> dets;
        for (const auto& d : img.detections)
            if (d.label == UNKNOWN_CLASS) dets.push_back(d);
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        const auto outcomes = match_detections(dets, img.unknown_gts, frame.iou_thr);
        for (const auto& o : outcomes)
            if (o.tp) ++matched;
    }
    if (pool == 0) return std::nullopt;
    return static_cast<double>(matched) / static_cast<double>(pool);
}

long long a_ose(const EvalFrame& frame) {
    long long count = 0;
    for (const auto& img : frame.images) {
        // TP set under per-class greedy matching
        std::set<int> known_classes;
        for (const auto& g : img.known_gts) known_classes.insert(g.class_id);
        std::vector<bool> is_tp(img.detections.size(), false);
        for (int c : known_classes) {
            std::vector<size_t> refs;
            for (size_t d = 0; d < img.detections.size(); ++d)
                if (img.detections[d].label == c) refs.push_back(d);
            std::stable_sort(refs.begin(), refs.end(), [&](size_t a, size_t b) {
                return img.detections[a].score > img.detections[b].score;
            });
            std::vector<Detection> dets;
            for (size_t r : refs) dets.push_back(img.detections[r]);
            std::vector<BoundingBox> gts;
            for (const auto& g : img.known_gts)
                if (g.class_id == c) gts.push_back(g.box);
            const auto outcomes = match_detections(dets, gts, frame.iou_thr);
            for (size_t i = 0; i < refs.size(); ++i)
                if (outcomes[i].tp) is_tp[refs[i]] = true;
        }
        for (size_t d = 0; d < img.detections.size(); ++d) {
            const auto& det = img.detections[d];
            if (det.label == UNKNOWN_CLASS || is_tp[d]) continue;
            for (const auto& ub : img.unknown_gts)
                if (iou(det.box, ub) >= frame.iou_thr) {
                    ++count;
                    break;
                }
        }
    }
    return count;
}

std::optional<double> wilderness_impact(const EvalFrame& frame, double recall_level) {
    const auto open_stream = pooled_known_stream(frame);
    std::vector<PooledDet> closed_stream;
    for (const auto& p : open_stream)
        if (p.tp || !p.hits_unknown) closed_stream.push_back(p);
    const long long gts = known_gt_total(frame);
    const auto p_open = precision_at_recall(open_stream, gts, recall_level);
    const auto p_closed = precision_at_recall(closed_stream, gts, recall_level);
    if (!p_open || !p_closed || *p_open <= 0) return std::nullopt;
    return *p_closed / *p_open - 1.0;
}

double f1i(double prev_map, double cur_map) {
    if (prev_map < 0 || cur_map < 0) throw std::invalid_argument("f1i: negative input");
    if (prev_map + cur_map == 0) return 0;
    return 2.0 * prev_map * cur_map / (prev_map + cur_map);
}

UnknownPrecisionResult unknown_precision(const EvalFrame& frame) {
    UnknownPrecisionResult r;
    long long pool = 0, matched = 0, dets_total = 0;
    std::vector<std::pair<double, bool>> scored;
    for (const auto& img : frame.images) {
        pool += static_cast<long long>(img.unknown_gts.size());
        std::vector<Detection> dets;
        for (const auto& d : img.detections)
            if (d.label == UNKNOWN_CLASS) dets.push_back(d);
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        dets_total += static_cast<long long>(dets.size());
        const auto outcomes = match_detections(dets, img.unknown_gts, frame.iou_thr);
        for (size_t i = 0; i < dets.size(); ++i) {
            if (outcomes[i].tp) ++matched;
            scored.emplace_back(dets[i].score, outcomes[i].tp);
        }
    }
    if (dets_total > 0)
        r.precision = static_cast<double>(matched) / static_cast<double>(dets_total);
    r.recall = pool > 0 ? static_cast<double>(matched) / static_cast<double>(pool) : 0.0;
    r.ap50 = average_precision_voc2010(std::move(scored), pool);
    return r;
}

MetricsReport evaluate_frame(const EvalFrame& frame, const ClassRegistry& registry,
                             double wi_recall_level) {
    MetricsReport rep;
    rep.iou_thr = frame.iou_thr;
    rep.wi_recall_level = wi_recall_level;
    rep.image_count = static_cast<long long>(frame.images.size());
    for (const auto& img : frame.images)
        rep.detection_count += static_cast<long long>(img.detections.size());

    auto mean_over = [&](const std::vector<int>& classes) -> std::optional<double> {
        double sum = 0;
        int n = 0;
        for (int c : classes) {
            auto it = rep.per_class.find(c);
            if (it == rep.per_class.end()) continue;
            sum += it->second;
            ++n;
        }
        if (n == 0) return std::nullopt;
        return sum / n;
    };

    for (int c : registry.known()) {
        const auto ap = per_class_ap(frame, c);
        if (ap)
            rep.per_class[c] = *ap;
        else
            rep.undefined_classes.push_back(c);
    }
    rep.map_prev = mean_over(registry.prior_known());
    rep.map_cur = mean_over(registry.task_classes(registry.current_task));
    rep.map_both = mean_over(registry.known());
    rep.u_recall_value = u_recall(frame);
    rep.a_ose_value = a_ose(frame);
    rep.wi_value = wilderness_impact(frame, wi_recall_level);
    if (rep.map_prev && rep.map_cur) rep.f1i_value = f1i(*rep.map_prev, *rep.map_cur);
    const auto up = unknown_precision(frame);
    rep.unknown_precision_value = up.precision;
    rep.unknown_recall_value = up.recall;
    rep.unknown_ap50 = up.ap50;
    return rep;
}

namespace {

json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> opt_from_json(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

} // namespace

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& r) {
    json j;
    json pc;
    for (const auto& [c, ap] : r.per_class) pc[std::to_string(c)] = ap;
    j["per_class_ap"] = pc;
    j["undefined_ap_classes"] = r.undefined_classes;
    j["map_prev"] = opt_to_json(r.map_prev);
    j["map_cur"] = opt_to_json(r.map_cur);
    j["map_both"] = opt_to_json(r.map_both);
    j["u_recall"] = opt_to_json(r.u_recall_value);
    j["a_ose"] = r.a_ose_value;
    j["wi"] = opt_to_json(r.wi_value);
    j["f1i"] = opt_to_json(r.f1i_value);
    j["unknown_precision"] = opt_to_json(r.unknown_precision_value);
    j["unknown_recall"] = r.unknown_recall_value;
    j["unknown_ap50"] = opt_to_json(r.unknown_ap50);
    j["images"] = r.image_count;
    j["detections"] = r.detection_count;
    j["iou_threshold"] = r.iou_thr;
    j["wi_recall_level"] = r.wi_recall_level;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("metrics: cannot open " + path.string());
    os << j.dump(2) << '\n';
}

MetricsReport read_metrics_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("metrics: cannot open " + path.string());
    json j;
    is >> j;
    MetricsReport r;
    for (const auto& [k, v] : j.at("per_class_ap").items())
        r.per_class[std::stoi(k)] = v.get<double>();
    r.undefined_classes = j.value("undefined_ap_classes", std::vector<int>{});
    r.map_prev = opt_from_json(j, "map_prev");
    r.map_cur = opt_from_json(j, "map_cur");
    r.map_both = opt_from_json(j, "map_both");
    r.u_recall_value = opt_from_json(j, "u_recall");
    r.a_ose_value = j.at("a_ose").get<long long>();
    r.wi_value = opt_from_json(j, "wi");
    r.f1i_value = opt_from_json(j, "f1i");
    r.unknown_precision_value = opt_from_json(j, "unknown_precision");
    r.unknown_recall_value = j.value("unknown_recall", 0.0);
    r.unknown_ap50 = opt_from_json(j, "unknown_ap50");
    r.image_count = j.value("images", 0LL);
    r.detection_count = j.value("detections", 0LL);
    r.iou_thr = j.value("iou_threshold", 0.5);
    r.wi_recall_level = j.value("wi_recall_level", 0.8);
    return r;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<int, MetricsReport>>& per_task) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("metrics: cannot open " + path.string());
    os << "task,u_recall,map_prev,map_current,map_both,f1i,a_ose,wi\n";
    auto pct = [](const std::optional<double>& v) -> std::string {
        if (!v) return "n/a";
        return std::to_string(*v * 100.0);
    };
    for (const auto& [task, r] : per_task) {
        os << task << ',' << pct(r.u_recall_value) << ',' << pct(r.map_prev) << ','
           << pct(r.map_cur) << ',' << pct(r.map_both) << ',' << pct(r.f1i_value) << ','
           << r.a_ose_value << ',' << (r.wi_value ? std::to_string(*r.wi_value) : "n/a") << '\n';
    }
}

} // namespace owdet
