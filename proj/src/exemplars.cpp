#include "owdet/exemplars.hpp"

#include <algorithm>
#include <iostream>
#include <set>
#include <stdexcept>

namespace owdet {

ExemplarBuildResult build_exemplar_set(const std::vector<ImageRecord>& dataset_view,
                                       const std::vector<int>& classes, int n) {
    if (n < 1) throw std::invalid_argument("build_exemplar_set: n must be >= 1");
    std::map<int, std::vector<const ImageRecord*>> queues;
    for (int c : classes) queues[c] = {};

    auto all_full = [&] {
        for (const auto& [c, q] : queues)
            if (static_cast<int>(q.size()) < n) return false;
        return true;
    };

    for (const auto& rec : dataset_view) {
        for (const auto& a : rec.annotations) {
            auto it = queues.find(a.class_id);
            if (it == queues.end()) continue; // not a class of this task
            if (static_cast<int>(it->second.size()) < n) it->second.push_back(&rec);
        }
        if (all_full()) break;
    }

    ExemplarBuildResult result;
    std::set<const ImageRecord*> seen;
    std::vector<const ImageRecord*> ordered;
    for (const auto& rec : dataset_view) {
        bool queued = false;
        for (const auto& [c, q] : queues)
            if (std::find(q.begin(), q.end(), &rec) != q.end()) {
                queued = true;
                break;
            }
        if (queued && seen.insert(&rec).second) ordered.push_back(&rec);
    }
    for (const auto* rec : ordered) result.image_ids.push_back(rec->image_id);
    for (const auto& [c, q] : queues) {
        result.instance_counts[c] = static_cast<int>(q.size());
        if (static_cast<int>(q.size()) < n) {
            result.undersampled.push_back(c);
            std::cerr << "[exemplars] class " << c << " under-sampled: " << q.size() << "/" << n
                      << " instances available\n";
        }
    }
    return result;
}

bool ExemplarStore::has_task(int t) const {
    for (const auto& e : tasks_)
        if (e.task == t) return true;
    return false;
}

const ExemplarStore::TaskExemplars& ExemplarStore::add_task(
    int t, const std::vector<ImageRecord>& dataset_view, const std::vector<int>& classes) {
    if (has_task(t)) throw std::logic_error("ExemplarStore: task already stored");
    const ExemplarBuildResult built = build_exemplar_set(dataset_view, classes, per_class_n);
    if (!dataset_view.empty() &&
        static_cast<double>(built.image_ids.size()) >
            max_fraction * static_cast<double>(dataset_view.size()))
        throw std::runtime_error("ExemplarStore: |R^t| = " + std::to_string(built.image_ids.size()) +
                                 " exceeds " + std::to_string(max_fraction) + " of |D^t| = " +
                                 std::to_string(dataset_view.size()));

    TaskExemplars e;
    e.task = t;
    e.instance_counts = built.instance_counts;
    e.undersampled = built.undersampled;
    const std::set<std::string> keep(built.image_ids.begin(), built.image_ids.end());
    for (const auto& rec : dataset_view)
        if (keep.count(rec.image_id)) e.records.push_back(rec);
    tasks_.push_back(std::move(e));
    return tasks_.back();
}

std::vector<ImageRecord> ExemplarStore::merged_union(int up_to) const {
    std::vector<ImageRecord> merged;
    std::map<std::string, size_t> index;
    for (const auto& e : tasks_) {
        if (e.task > up_to) continue;
        for (const auto& rec : e.records) {
            auto it = index.find(rec.image_id);
            if (it == index.end()) {
                index[rec.image_id] = merged.size();
                merged.push_back(rec);
            } else {
                // same image sampled for several tasks: union the label views
                auto& dst = merged[it->second].annotations;
                dst.insert(dst.end(), rec.annotations.begin(), rec.annotations.end());
            }
        }
    }
    return merged;
}

} // namespace owdet
