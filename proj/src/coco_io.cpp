#include "owdet/coco_io.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <stdexcept>

#include "owdet/raster_io.hpp"

namespace owdet {

using nlohmann::json;

namespace {

json load_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return j;
}

} // namespace

CocoDataset read_coco(const std::filesystem::path& annotation_file) {
    const json j = load_json(annotation_file);
    if (!j.contains("images") || !j.contains("annotations") || !j.contains("categories"))
        throw std::runtime_error(annotation_file.string() +
                                 ": missing images/annotations/categories section");

    CocoDataset ds;
    std::set<int> category_ids;
    for (const auto& c : j.at("categories")) {
        CocoCategory cat;
        cat.id = c.at("id").get<int>();
        cat.name = c.value("name", "");
        category_ids.insert(cat.id);
        ds.categories.push_back(std::move(cat));
    }

    std::map<std::string, size_t> index_by_id;
    for (const auto& im : j.at("images")) {
        ImageRecord rec;
        // ids may be numeric or string in the wild; normalize to string
        const auto& idv = im.at("id");
        rec.image_id = idv.is_string() ? idv.get<std::string>() : std::to_string(idv.get<long long>());
        if (!im.contains("width") || !im.contains("height"))
            throw std::runtime_error("image " + rec.image_id + ": missing width/height");
        rec.width = im.at("width").get<int>();
        rec.height = im.at("height").get<int>();
        index_by_id[rec.image_id] = ds.records.size();
        if (im.contains("file_name")) ds.file_names[rec.image_id] = im.at("file_name").get<std::string>();
        ds.records.push_back(std::move(rec));
    }

    for (const auto& a : j.at("annotations")) {
        const auto& idv = a.at("image_id");
        const std::string image_id =
            idv.is_string() ? idv.get<std::string>() : std::to_string(idv.get<long long>());
        auto it = index_by_id.find(image_id);
        if (it == index_by_id.end())
            throw std::runtime_error("annotation references unknown image " + image_id);
        const int category = a.at("category_id").get<int>();
        if (!category_ids.count(category))
            throw std::runtime_error("annotation references unknown category " +
                                     std::to_string(category));
        const auto& bb = a.at("bbox");
        if (!bb.is_array() || bb.size() != 4)
            throw std::runtime_error("annotation for image " + image_id + ": bbox must be [x,y,w,h]");
        Annotation ann;
        ann.class_id = category;
        ann.box = BoundingBox::from_xywh(bb[0].get<double>(), bb[1].get<double>(),
                                         bb[2].get<double>(), bb[3].get<double>());
        ds.records[it->second].annotations.push_back(ann);
    }

    for (const auto& rec : ds.records) rec.validate();
    return ds;
}

void write_coco(const std::filesystem::path& annotation_file,
                const std::vector<ImageRecord>& records,
                const std::vector<CocoCategory>& categories,
                const std::map<std::string, std::string>& file_names) {
    json j;
    j["images"] = json::array();
    j["annotations"] = json::array();
    j["categories"] = json::array();
    int ann_id = 1;
    for (const auto& rec : records) {
        json im;
        im["id"] = rec.image_id;
        im["width"] = rec.width;
        im["height"] = rec.height;
        if (auto it = file_names.find(rec.image_id); it != file_names.end())
            im["file_name"] = it->second;
        j["images"].push_back(std::move(im));
        for (const auto& a : rec.annotations) {
            json ann;
            ann["id"] = ann_id++;
            ann["image_id"] = rec.image_id;
            ann["category_id"] = a.class_id;
            ann["bbox"] = {a.box.x1, a.box.y1, a.box.width(), a.box.height()};
            j["annotations"].push_back(std::move(ann));
        }
    }
    for (const auto& c : categories) j["categories"].push_back({{"id", c.id}, {"name", c.name}});

    std::ofstream os(annotation_file);
    if (!os) throw std::runtime_error("cannot open " + annotation_file.string());
    os << j.dump(2) << '\n';
}

void load_rasters(CocoDataset& ds, const std::filesystem::path& image_root) {
    if (std::filesystem::is_regular_file(image_root)) {
        auto archive = read_raster_archive(image_root);
        for (auto& rec : ds.records) {
            auto it = archive.find(rec.image_id);
            if (it == archive.end())
                throw std::runtime_error("raster archive missing image " + rec.image_id);
            rec.raster = std::move(it->second);
        }
        return;
    }
    for (auto& rec : ds.records) {
        auto it = ds.file_names.find(rec.image_id);
        if (it == ds.file_names.end())
            throw std::runtime_error("no file_name recorded for image " + rec.image_id);
        rec.raster = read_png(image_root / it->second);
        if (rec.raster.width != rec.width || rec.raster.height != rec.height)
            throw std::runtime_error("image " + rec.image_id + ": raster size disagrees with metadata");
    }
}

CocoDataset ingest_coco(const std::filesystem::path& annotation_file,
                        const std::filesystem::path& image_root) {
    CocoDataset ds = read_coco(annotation_file);
    load_rasters(ds, image_root);
    return ds;
}

TaskSchedule read_schedule(const std::filesystem::path& schedule_file) {
    const json j = load_json(schedule_file);
    if (!j.is_array()) throw std::runtime_error("schedule file must be an array of task arrays");
    std::vector<std::vector<int>> tasks;
    for (const auto& t : j) tasks.push_back(t.get<std::vector<int>>());
    return TaskSchedule(std::move(tasks));
}

void write_schedule(const std::filesystem::path& schedule_file, const TaskSchedule& schedule) {
    std::ofstream os(schedule_file);
    if (!os) throw std::runtime_error("cannot open " + schedule_file.string());
    os << json(schedule.tasks).dump(2) << '\n';
}

} // namespace owdet
