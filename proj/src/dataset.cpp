#include "owdet/dataset.hpp"

#include <algorithm>
#include <stdexcept>

namespace owdet {

void ImageRecord::validate() const {
    for (const auto& a : annotations) {
        if (a.box.x1 < 0 || a.box.y1 < 0 || a.box.x2 > width || a.box.y2 > height)
            throw std::invalid_argument("ImageRecord " + image_id + ": annotation box outside image bounds");
    }
}

TaskSchedule::TaskSchedule(std::vector<std::vector<int>> t) : tasks(std::move(t)) {
    std::set<int> seen;
    for (const auto& task : tasks) {
        if (task.empty()) throw std::invalid_argument("TaskSchedule: empty task");
        for (int c : task) {
            if (!seen.insert(c).second)
                throw std::invalid_argument("TaskSchedule: class " + std::to_string(c) +
                                            " appears in more than one task");
        }
    }
}

std::vector<int> TaskSchedule::universe() const {
    std::vector<int> all;
    for (const auto& task : tasks) all.insert(all.end(), task.begin(), task.end());
    return all;
}

ClassRegistry::ClassRegistry(TaskSchedule s, int t) : schedule(std::move(s)), current_task(t) {
    if (t < 1 || t > schedule.task_count())
        throw std::out_of_range("ClassRegistry: task index " + std::to_string(t) + " out of range");
}

std::vector<int> ClassRegistry::known() const {
    std::vector<int> k;
    for (int t = 0; t < current_task; ++t)
        k.insert(k.end(), schedule.tasks[t].begin(), schedule.tasks[t].end());
    return k;
}

std::vector<int> ClassRegistry::unknown_pool() const {
    std::vector<int> u;
    for (int t = current_task; t < schedule.task_count(); ++t)
        u.insert(u.end(), schedule.tasks[t].begin(), schedule.tasks[t].end());
    return u;
}

std::vector<int> ClassRegistry::prior_known() const {
    std::vector<int> k;
    for (int t = 0; t + 1 < current_task; ++t)
        k.insert(k.end(), schedule.tasks[t].begin(), schedule.tasks[t].end());
    return k;
}

std::vector<int> ClassRegistry::task_classes(int t) const {
    if (t < 1 || t > schedule.task_count())
        throw std::out_of_range("task index " + std::to_string(t) + " out of range");
    return schedule.tasks[static_cast<size_t>(t - 1)];
}

bool ClassRegistry::is_known(int class_id) const {
    const auto k = known();
    return std::find(k.begin(), k.end(), class_id) != k.end();
}

int ClassRegistry::dense_index(int class_id) const {
    const auto k = known();
    auto it = std::find(k.begin(), k.end(), class_id);
    if (it == k.end())
        throw std::invalid_argument("dense_index: class " + std::to_string(class_id) + " not known");
    return static_cast<int>(it - k.begin());
}

std::pair<std::vector<int>, std::vector<int>> known_and_unknown(const ClassRegistry& registry) {
    return {registry.known(), registry.unknown_pool()};
}

std::vector<ImageRecord> make_task_view(const std::vector<ImageRecord>& dataset,
                                        const ClassRegistry& registry, int t) {
    const auto classes = registry.task_classes(t); // throws when t out of range
    const std::set<int> keep(classes.begin(), classes.end());
    std::vector<ImageRecord> view;
    for (const auto& rec : dataset) {
        ImageRecord filtered = rec;
        filtered.annotations.clear();
        for (const auto& a : rec.annotations)
            if (keep.count(a.class_id)) filtered.annotations.push_back(a);
        if (!filtered.annotations.empty()) view.push_back(std::move(filtered));
    }
    return view;
}

} // namespace owdet
