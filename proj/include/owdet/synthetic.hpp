#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "owdet/coco_io.hpp"
#include "owdet/dataset.hpp"

namespace owdet {

enum class Shape { circle, square, triangle, cross, ring, star, bar, ellipse };

Shape shape_from_name(const std::string& name);
std::string shape_name(Shape s);

struct ShapeClass {
    Shape shape = Shape::circle;
    std::string color; // named color from the generator palette
};

/// Configuration for the deterministic scene generator. Category ids are
/// assigned 1..N in shape_classes order.
struct SceneConfig {
    int image_size = 128;
    std::vector<ShapeClass> shape_classes;
    int objects_min = 1;
    int objects_max = 3;
    double scale_min = 0.15; // object size as fraction of image size
    double scale_max = 0.35;
    int clutter_level = 6; // unlabeled distractor textures per scene
    std::uint64_t seed = 0;

    void validate() const;
};

/// Default 8-class palette (one color per shape).
std::vector<ShapeClass> default_shape_classes();

ImageRecord generate_scene(const SceneConfig& cfg, int index);
std::vector<ImageRecord> generate_dataset(const SceneConfig& cfg, int n);

std::vector<CocoCategory> scene_categories(const SceneConfig& cfg);

/// Tight box of the class-colored foreground pixels inside `hint`, grown by
/// `margin` on each side. Used by tests to confirm annotation tightness.
BoundingBox mask_bounding_box(const Raster& raster, const BoundingBox& hint, double margin);

} // namespace owdet
