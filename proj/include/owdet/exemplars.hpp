#pragma once

#include <map>
#include <string>
#include <vector>

#include "owdet/dataset.hpp"

namespace owdet {

struct ExemplarBuildResult {
    std::vector<std::string> image_ids;  // dataset order, unique
    std::map<int, int> instance_counts;  // per class, capped at n
    std::vector<int> undersampled;       // classes that never reached n
};

/// Class-balanced sampling: one FIFO queue of capacity n per class, filled
/// per instance in dataset iteration order (pushes onto a full queue are
/// dropped). Iteration stops early once every queue is full; if the data
/// runs out first the partial queues are returned and the short classes
/// reported. The result is the unique union of the queued images.
ExemplarBuildResult build_exemplar_set(const std::vector<ImageRecord>& dataset_view,
                                       const std::vector<int>& classes, int n);

/// Per-task exemplar sets R^1..R^t with merged label views.
class ExemplarStore {
  public:
    int per_class_n = 25;
    double max_fraction = 0.5; // |R^t| / |D^t| ceiling, checked at add_task

    struct TaskExemplars {
        int task = 0;
        std::vector<ImageRecord> records; // annotations are the task view's
        std::map<int, int> instance_counts;
        std::vector<int> undersampled;
    };

    const std::vector<TaskExemplars>& tasks() const { return tasks_; }
    bool has_task(int t) const;

    /// Builds R^t from the task view and stores it. Throws when the sampled
    /// set exceeds max_fraction of the view.
    const TaskExemplars& add_task(int t, const std::vector<ImageRecord>& dataset_view,
                                  const std::vector<int>& classes);

    /// Union of R^1..R^up_to with annotation lists merged per image_id.
    std::vector<ImageRecord> merged_union(int up_to) const;

  private:
    std::vector<TaskExemplars> tasks_;
};

} // namespace owdet
