#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "owdet/geometry.hpp"

namespace owdet {

/// Reserved label for detections of objects outside the known class set.
/// Class ids from schedules are always >= 0, so -1 never collides.
inline constexpr int UNKNOWN_CLASS = -1;

struct Annotation {
    int class_id = 0;
    BoundingBox box;
};

/// HxWxC interleaved 8-bit raster.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    bool empty() const { return pixels.empty(); }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
    std::uint8_t& at(int x, int y, int c) {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
    bool operator==(const Raster&) const = default;
};

struct ImageRecord {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<Annotation> annotations;
    Raster raster; // may be empty until rendered/loaded

    void validate() const;
};

/// Ordered class partitions C^1..C^T. Task indices are 1-based throughout.
struct TaskSchedule {
    std::vector<std::vector<int>> tasks;

    explicit TaskSchedule(std::vector<std::vector<int>> t);
    TaskSchedule() = default;

    int task_count() const { return static_cast<int>(tasks.size()); }
    /// All class ids in schedule order (task 1 first).
    std::vector<int> universe() const;
};

struct ClassRegistry {
    TaskSchedule schedule;
    int current_task = 1;

    ClassRegistry() = default;
    ClassRegistry(TaskSchedule s, int t);

    std::vector<int> known() const;                  // K^t, schedule order
    std::vector<int> unknown_pool() const;           // U^t = universe - K^t
    std::vector<int> prior_known() const;            // K^{t-1}
    std::vector<int> task_classes(int t) const;      // C^t
    bool is_known(int class_id) const;

    /// Dense index of a known class (position in K^t, schedule order).
    /// Score vectors and classifier heads are indexed this way; the
    /// background entry sits at index |K^t|.
    int dense_index(int class_id) const;
    int known_count() const { return static_cast<int>(known().size()); }
};

struct Detection {
    int label = UNKNOWN_CLASS; // class id, or UNKNOWN_CLASS
    double score = 0.0;
    BoundingBox box;
    /// Scores for unknown-labeled detections come from the objectness head
    /// and are not on the classifier's scale; consumers can floor them
    /// separately.
    enum class Provenance { classifier, objectness };
    Provenance provenance = Provenance::classifier;
};

std::pair<std::vector<int>, std::vector<int>> known_and_unknown(const ClassRegistry& registry);

/// Records filtered to task-t labels; images left with no annotation are dropped.
std::vector<ImageRecord> make_task_view(const std::vector<ImageRecord>& dataset,
                                        const ClassRegistry& registry, int t);

} // namespace owdet
