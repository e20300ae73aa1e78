#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "owdet/coco_io.hpp"
#include "owdet/raster_io.hpp"
#include "owdet/synthetic.hpp"

using namespace owdet;

namespace {

SceneConfig small_config(std::uint64_t seed, int classes = 5) {
    SceneConfig cfg;
    cfg.image_size = 128;
    auto all = default_shape_classes();
    cfg.shape_classes.assign(all.begin(), all.begin() + classes);
    cfg.objects_min = 3;
    cfg.objects_max = 3;
    cfg.scale_min = 0.15;
    cfg.scale_max = 0.3;
    cfg.clutter_level = 4;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("generation is deterministic per (seed, index)") {
    const SceneConfig cfg = small_config(42);
    const ImageRecord a = generate_scene(cfg, 7);
    const ImageRecord b = generate_scene(cfg, 7);
    CHECK(a.raster == b.raster);
    REQUIRE(a.annotations.size() == b.annotations.size());
    for (size_t i = 0; i < a.annotations.size(); ++i) {
        CHECK(a.annotations[i].class_id == b.annotations[i].class_id);
        CHECK(a.annotations[i].box == b.annotations[i].box);
    }
}

TEST_CASE("different seeds give different rasters") {
    SceneConfig a = small_config(1), b = small_config(2);
    CHECK(generate_scene(a, 0).raster.pixels != generate_scene(b, 0).raster.pixels);
}

TEST_CASE("single-object scenes have a tight annotation") {
    SceneConfig cfg = small_config(9);
    cfg.objects_min = cfg.objects_max = 1;
    for (int index = 0; index < 12; ++index) {
        const ImageRecord rec = generate_scene(cfg, index);
        REQUIRE(rec.annotations.size() == 1);
        const BoundingBox& ann = rec.annotations[0].box;
        const BoundingBox derived = mask_bounding_box(rec.raster, ann, 3.0);
        CHECK(std::abs(derived.x1 - ann.x1) <= 1.0);
        CHECK(std::abs(derived.y1 - ann.y1) <= 1.0);
        CHECK(std::abs(derived.x2 - ann.x2) <= 1.0);
        CHECK(std::abs(derived.y2 - ann.y2) <= 1.0);
        rec.validate();
    }
}

TEST_CASE("class frequencies stay near uniform over 100 scenes") {
    const SceneConfig cfg = small_config(3, 5);
    std::map<int, int> counts;
    int total = 0;
    for (int i = 0; i < 100; ++i)
        for (const auto& a : generate_scene(cfg, i).annotations) {
            ++counts[a.class_id];
            ++total;
        }
    const double expected = total / 5.0;
    for (int c = 1; c <= 5; ++c) {
        CHECK(counts[c] >= expected * 0.8);
        CHECK(counts[c] <= expected * 1.2);
    }
}

TEST_CASE("generate_dataset boundaries and task coverage") {
    const SceneConfig cfg = small_config(13, 8);
    CHECK_THROWS_AS(generate_dataset(cfg, 0), std::invalid_argument);

    const auto ds = generate_dataset(cfg, 40);
    CHECK(ds.size() == 40);
    std::set<std::string> ids;
    for (const auto& r : ds) ids.insert(r.image_id);
    CHECK(ids.size() == 40);

    const TaskSchedule four({{1, 2}, {3, 4}, {5, 6}, {7, 8}});
    for (int t = 1; t <= 4; ++t) {
        const auto view = make_task_view(ds, ClassRegistry(four, t), t);
        CHECK(!view.empty());
    }
}

TEST_CASE("impossible placement is reported") {
    SceneConfig cfg = small_config(4);
    cfg.objects_min = cfg.objects_max = 9;
    cfg.scale_min = 0.5;
    cfg.scale_max = 0.6;
    CHECK_THROWS_AS(generate_dataset(cfg, 5), std::runtime_error);
}

TEST_CASE("config validation") {
    SceneConfig cfg = small_config(1);
    cfg.shape_classes.clear();
    CHECK_THROWS(cfg.validate());
    cfg = small_config(1);
    cfg.objects_min = 0;
    CHECK_THROWS(cfg.validate());
    cfg = small_config(1);
    cfg.shape_classes[0].color = "mauve";
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("png round-trip preserves pixels") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "owdet_synth_test";
    fs::create_directories(dir);
    const ImageRecord rec = generate_scene(small_config(21), 0);
    write_png(dir / "scene.png", rec.raster);
    const Raster back = read_png(dir / "scene.png");
    CHECK(back == rec.raster);
}

TEST_CASE("raster archive round-trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "owdet_synth_test";
    fs::create_directories(dir);
    const SceneConfig cfg = small_config(22);
    std::map<std::string, Raster> rasters;
    for (int i = 0; i < 3; ++i) {
        const auto rec = generate_scene(cfg, i);
        rasters[rec.image_id] = rec.raster;
    }
    write_raster_archive(dir / "set.rast", rasters);
    const auto back = read_raster_archive(dir / "set.rast");
    CHECK(back == rasters);
}

TEST_CASE("ingest mirrors a written synthetic dataset") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "owdet_synth_ingest";
    fs::create_directories(dir);
    const SceneConfig cfg = small_config(31);
    auto ds = generate_dataset(cfg, 4);
    // one record without annotations must survive the round trip
    ds.push_back(ImageRecord{"empty_img", cfg.image_size, cfg.image_size, {}, ds[0].raster});

    std::map<std::string, std::string> file_names;
    std::map<std::string, Raster> rasters;
    for (const auto& r : ds) {
        file_names[r.image_id] = r.image_id + ".png";
        write_png(dir / (r.image_id + ".png"), r.raster);
        rasters[r.image_id] = r.raster;
    }
    write_coco(dir / "ann.json", ds, scene_categories(cfg), file_names);

    const CocoDataset got = ingest_coco(dir / "ann.json", dir);
    REQUIRE(got.records.size() == ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(got.records[i].image_id == ds[i].image_id);
        CHECK(got.records[i].annotations.size() == ds[i].annotations.size());
        for (size_t a = 0; a < ds[i].annotations.size(); ++a) {
            CHECK(got.records[i].annotations[a].class_id == ds[i].annotations[a].class_id);
            CHECK(got.records[i].annotations[a].box == ds[i].annotations[a].box);
        }
        CHECK(got.records[i].raster == ds[i].raster);
    }

    // archive path
    write_raster_archive(dir / "set.rast", rasters);
    const CocoDataset via_archive = ingest_coco(dir / "ann.json", dir / "set.rast");
    CHECK(via_archive.records[0].raster == ds[0].raster);
}
