#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "owdet/dataset.hpp"

namespace owdet {

struct CocoCategory {
    int id = 0;
    std::string name;
};

/// Result of parsing a COCO-style annotation file. Records keep the file's
/// image order; rasters are loaded separately (see load_rasters).
struct CocoDataset {
    std::vector<ImageRecord> records;
    std::vector<CocoCategory> categories;
    std::map<std::string, std::string> file_names; // image_id -> file_name
};

CocoDataset read_coco(const std::filesystem::path& annotation_file);

void write_coco(const std::filesystem::path& annotation_file,
                const std::vector<ImageRecord>& records,
                const std::vector<CocoCategory>& categories,
                const std::map<std::string, std::string>& file_names);

/// Fills in rasters for each record. `image_root` is either a directory of
/// image files (looked up via file_names) or a .rast archive path.
void load_rasters(CocoDataset& ds, const std::filesystem::path& image_root);

/// read_coco + load_rasters in one step.
CocoDataset ingest_coco(const std::filesystem::path& annotation_file,
                        const std::filesystem::path& image_root);

TaskSchedule read_schedule(const std::filesystem::path& schedule_file);
void write_schedule(const std::filesystem::path& schedule_file, const TaskSchedule& schedule);

} // namespace owdet
