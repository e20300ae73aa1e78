#include "owdet/detect.hpp"

#include <json.hpp>

#include <fstream>

namespace owdet {

using nlohmann::json;

void write_detection_dump(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, Detection>>& dets) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("detection dump: cannot open " + path.string());
    for (const auto& [image_id, d] : dets) {
        json line;
        line["image_id"] = image_id;
        if (d.label == UNKNOWN_CLASS)
            line["label"] = "unknown";
        else
            line["label"] = d.label;
        line["score"] = d.score;
        line["box"] = {d.box.x1, d.box.y1, d.box.width(), d.box.height()};
        line["provenance"] =
            d.provenance == Detection::Provenance::objectness ? "objectness" : "classifier";
        os << line.dump() << '\n';
    }
}

std::vector<std::pair<std::string, Detection>> read_detection_dump(
    const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("detection dump: cannot open " + path.string());
    std::vector<std::pair<std::string, Detection>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            Detection d;
            if (j.at("label").is_string()) {
                if (j.at("label").get<std::string>() != "unknown")
                    throw std::runtime_error("bad label string");
                d.label = UNKNOWN_CLASS;
            } else {
                d.label = j.at("label").get<int>();
            }
            d.score = j.at("score").get<double>();
            const auto& b = j.at("box");
            d.box = BoundingBox::from_xywh(b.at(0).get<double>(), b.at(1).get<double>(),
                                           b.at(2).get<double>(), b.at(3).get<double>());
            d.provenance = j.value("provenance", "classifier") == std::string("objectness")
                               ? Detection::Provenance::objectness
                               : Detection::Provenance::classifier;
            out.emplace_back(j.at("image_id").get<std::string>(), d);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": schema violation: " + e.what());
        }
    }
    return out;
}

} // namespace owdet
