#include "owdet/runconfig.hpp"

#include <json.hpp>

#include <fstream>

namespace owdet {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

json scene_to_json(const SceneConfig& s) {
    json j;
    j["image_size"] = s.image_size;
    j["classes"] = json::array();
    for (const auto& sc : s.shape_classes)
        j["classes"].push_back({{"shape", shape_name(sc.shape)}, {"color", sc.color}});
    j["objects_min"] = s.objects_min;
    j["objects_max"] = s.objects_max;
    j["scale_min"] = s.scale_min;
    j["scale_max"] = s.scale_max;
    j["clutter"] = s.clutter_level;
    return j;
}

void scene_from_json(const json& j, SceneConfig& s) {
    s.image_size = j.value("image_size", s.image_size);
    if (j.contains("classes")) {
        s.shape_classes.clear();
        for (const auto& c : j.at("classes"))
            s.shape_classes.push_back(
                {shape_from_name(c.at("shape").get<std::string>()), c.at("color").get<std::string>()});
    }
    s.objects_min = j.value("objects_min", s.objects_min);
    s.objects_max = j.value("objects_max", s.objects_max);
    s.scale_min = j.value("scale_min", s.scale_min);
    s.scale_max = j.value("scale_max", s.scale_max);
    s.clutter_level = j.value("clutter", s.clutter_level);
}

json to_json(const RunConfig& c) {
    json j;
    j["data_dir"] = c.data_dir;
    j["run_dir"] = c.run_dir;
    j["schedule"] = c.schedule;
    j["scene"] = scene_to_json(c.scene);
    j["train_images"] = c.train_images;
    j["test_images"] = c.test_images;
    j["raster_storage"] = c.raster_storage;
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"momentum", c.train.momentum},
                  {"lr_decay", c.train.lr_decay},
                  {"decay_at", c.train.decay_at},
                  {"proposals", c.train.proposals},
                  {"anchor_samples", c.train.anchor_samples},
                  {"pre_nms_topk", c.train.pre_nms_topk},
                  {"rpn_nms_iou", c.train.rpn_nms_iou},
                  {"add_gt_proposals", c.train.add_gt_proposals},
                  {"pos_iou", c.train.pos_iou},
                  {"neg_iou", c.train.neg_iou}};
    j["thresholds"] = {{"theta_obj", c.thresholds.theta_obj},
                       {"theta_cls", c.thresholds.theta_cls},
                       {"theta_conf", c.thresholds.theta_conf},
                       {"baseline_unknown", c.thresholds.baseline_unknown}};
    j["detect"] = {{"k_proposals", c.detect.k_proposals},
                   {"pre_nms_topk", c.detect.pre_nms_topk},
                   {"rpn_nms_iou", c.detect.rpn_nms_iou},
                   {"nms_iou", c.detect.nms_iou},
                   {"score_floor", c.detect.score_floor},
                   {"max_detections", c.detect.max_detections}};
    j["eval"] = {{"iou", c.eval.iou}, {"wi_recall", c.eval.wi_recall}};
    j["exemplars"] = {{"per_class", c.exemplars_per_class},
                      {"max_fraction", c.exemplar_max_fraction}};
    j["gmm"] = {{"components", c.gmm.components},
                {"min_samples", c.gmm.min_samples},
                {"cov_floor", c.gmm.cov_floor}};
    j["toggles"] = {{"fine_tune_only", c.toggles.fine_tune_only},
                    {"class_agnostic_detection", c.toggles.class_agnostic_detection},
                    {"gmm_correction", c.toggles.gmm_correction},
                    {"prior_class_handling", c.toggles.prior_class_handling}};
    j["detector"] = c.detector;
    j["seed"] = c.seed;
    return j;
}

} // namespace

void RunConfig::finalize() {
    scene.seed = seed * 0x2545f4914f6cdd1dull + 1;
    train.seed = seed * 0x9e3779b97f4a7c15ull + 2;
    gmm.seed = seed * 0xd1342543de82ef95ull + 3;
    train.prior_class_handling = toggles.prior_class_handling;
    train.theta_cls = thresholds.theta_cls;
    train.theta_obj = thresholds.theta_obj;
    detect.class_agnostic_detection = toggles.class_agnostic_detection;
    detect.gmm_correction = toggles.gmm_correction;
    if (scene.shape_classes.empty()) scene.shape_classes = default_shape_classes();
    shape.image_size = scene.image_size;
}

RunConfig default_run_config() {
    RunConfig c;
    c.scene.shape_classes = default_shape_classes();
    c.finalize();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    RunConfig c = default_run_config();
    c.data_dir = j.value("data_dir", c.data_dir);
    c.run_dir = j.value("run_dir", c.run_dir);
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<std::vector<std::vector<int>>>();
    if (j.contains("scene")) scene_from_json(j.at("scene"), c.scene);
    c.train_images = j.value("train_images", c.train_images);
    c.test_images = j.value("test_images", c.test_images);
    c.raster_storage = j.value("raster_storage", c.raster_storage);
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.lr = t.value("lr", c.train.lr);
        c.train.momentum = t.value("momentum", c.train.momentum);
        c.train.lr_decay = t.value("lr_decay", c.train.lr_decay);
        c.train.decay_at = t.value("decay_at", c.train.decay_at);
        c.train.proposals = t.value("proposals", c.train.proposals);
        c.train.anchor_samples = t.value("anchor_samples", c.train.anchor_samples);
        c.train.pre_nms_topk = t.value("pre_nms_topk", c.train.pre_nms_topk);
        c.train.rpn_nms_iou = t.value("rpn_nms_iou", c.train.rpn_nms_iou);
        c.train.add_gt_proposals = t.value("add_gt_proposals", c.train.add_gt_proposals);
        c.train.pos_iou = t.value("pos_iou", c.train.pos_iou);
        c.train.neg_iou = t.value("neg_iou", c.train.neg_iou);
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        c.thresholds.theta_obj = t.value("theta_obj", c.thresholds.theta_obj);
        c.thresholds.theta_cls = t.value("theta_cls", c.thresholds.theta_cls);
        c.thresholds.theta_conf = t.value("theta_conf", c.thresholds.theta_conf);
        c.thresholds.baseline_unknown = t.value("baseline_unknown", c.thresholds.baseline_unknown);
    }
    if (j.contains("detect")) {
        const auto& t = j.at("detect");
        c.detect.k_proposals = t.value("k_proposals", c.detect.k_proposals);
        c.detect.pre_nms_topk = t.value("pre_nms_topk", c.detect.pre_nms_topk);
        c.detect.rpn_nms_iou = t.value("rpn_nms_iou", c.detect.rpn_nms_iou);
        c.detect.nms_iou = t.value("nms_iou", c.detect.nms_iou);
        c.detect.score_floor = t.value("score_floor", c.detect.score_floor);
        c.detect.max_detections = t.value("max_detections", c.detect.max_detections);
    }
    if (j.contains("eval")) {
        c.eval.iou = j.at("eval").value("iou", c.eval.iou);
        c.eval.wi_recall = j.at("eval").value("wi_recall", c.eval.wi_recall);
    }
    if (j.contains("exemplars")) {
        c.exemplars_per_class = j.at("exemplars").value("per_class", c.exemplars_per_class);
        c.exemplar_max_fraction = j.at("exemplars").value("max_fraction", c.exemplar_max_fraction);
    }
    if (j.contains("gmm")) {
        c.gmm.components = j.at("gmm").value("components", c.gmm.components);
        c.gmm.min_samples = j.at("gmm").value("min_samples", c.gmm.min_samples);
        c.gmm.cov_floor = j.at("gmm").value("cov_floor", c.gmm.cov_floor);
    }
    if (j.contains("toggles")) {
        const auto& t = j.at("toggles");
        c.toggles.fine_tune_only = t.value("fine_tune_only", true);
        c.toggles.class_agnostic_detection = t.value("class_agnostic_detection", true);
        c.toggles.gmm_correction = t.value("gmm_correction", true);
        c.toggles.prior_class_handling = t.value("prior_class_handling", true);
    }
    c.detector = j.value("detector", c.detector);
    c.seed = j.value("seed", c.seed);
    c.finalize();
    return c;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot open " + path.string());
    os << to_json(cfg).dump(2) << '\n';
}

std::string config_hash(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(to_json(cfg).dump())));
    return buf;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const RunConfig& cfg) {
    json j;
    j["command"] = command;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["version"] = kVersion;
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "manifest.json");
    if (!os) throw std::runtime_error("manifest: cannot open " + (dir / "manifest.json").string());
    os << j.dump(2) << '\n';
}

} // namespace owdet
