#include "owdet/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace owdet {

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

// class palette: saturated, mutually distinct
const std::array<std::pair<const char*, Rgb>, 8> kPalette = {{
    {"red", {220, 50, 40}},
    {"green", {60, 190, 70}},
    {"blue", {60, 90, 230}},
    {"yellow", {235, 210, 40}},
    {"magenta", {210, 60, 200}},
    {"cyan", {50, 200, 210}},
    {"orange", {240, 140, 30}},
    {"purple", {140, 70, 210}},
}};

Rgb color_from_name(const std::string& name) {
    for (const auto& [n, c] : kPalette)
        if (name == n) return c;
    throw std::invalid_argument("unknown color name: " + name);
}

// splitmix64, used to derive independent per-scene streams
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

struct Poly {
    std::vector<std::pair<double, double>> pts;
    bool contains(double x, double y) const {
        bool in = false;
        for (size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
            const auto& [xi, yi] = pts[i];
            const auto& [xj, yj] = pts[j];
            if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
        }
        return in;
    }
};

Poly star_polygon(double cx, double cy, double outer, double inner) {
    Poly p;
    for (int i = 0; i < 10; ++i) {
        const double ang = -std::numbers::pi / 2.0 + i * std::numbers::pi / 5.0;
        const double r = (i % 2 == 0) ? outer : inner;
        p.pts.emplace_back(cx + r * std::cos(ang), cy + r * std::sin(ang));
    }
    return p;
}

Poly triangle_polygon(double cx, double cy, double h) {
    return Poly{{{cx, cy - h}, {cx + h, cy + h}, {cx - h, cy + h}}};
}

bool shape_contains(Shape s, double cx, double cy, double h, const Poly& poly, double x, double y) {
    const double dx = x - cx, dy = y - cy;
    switch (s) {
        case Shape::circle:
            return dx * dx + dy * dy <= h * h;
        case Shape::square:
            return std::abs(dx) <= h && std::abs(dy) <= h;
        case Shape::triangle:
        case Shape::star:
            return poly.contains(x, y);
        case Shape::cross:
            return (std::abs(dx) <= 0.30 * h && std::abs(dy) <= h) ||
                   (std::abs(dy) <= 0.30 * h && std::abs(dx) <= h);
        case Shape::ring: {
            const double d2 = dx * dx + dy * dy;
            return d2 <= h * h && d2 >= (0.55 * h) * (0.55 * h);
        }
        case Shape::bar:
            return std::abs(dx) <= h && std::abs(dy) <= 0.32 * h;
        case Shape::ellipse: {
            const double a = h, b = 0.55 * h;
            return (dx * dx) / (a * a) + (dy * dy) / (b * b) <= 1.0;
        }
    }
    return false;
}

void draw_clutter(Raster& img, std::mt19937_64& rng, int count) {
    // muted distractor textures; colors stay away from the class palette
    const int W = img.width, H = img.height;
    std::uniform_int_distribution<int> px(0, W - 1), py(0, H - 1);
    std::uniform_int_distribution<int> sz(4, W / 6);
    std::uniform_int_distribution<int> kind(0, 2);
    std::uniform_int_distribution<int> gray(70, 130);
    for (int i = 0; i < count; ++i) {
        const int k = kind(rng);
        const int x0 = px(rng), y0 = py(rng);
        const int w = sz(rng), h = sz(rng);
        const int g = gray(rng);
        const int tilt = gray(rng) - 100;
        for (int y = std::max(0, y0); y < std::min(H, y0 + h); ++y) {
            for (int x = std::max(0, x0); x < std::min(W, x0 + w); ++x) {
                bool on = true;
                if (k == 1) on = ((x / 3) + (y / 3)) % 2 == 0;            // checker
                if (k == 2) on = std::abs((x - x0) - (y - y0)) % 7 < 2;    // diagonal stripes
                if (!on) continue;
                img.at(x, y, 0) = static_cast<std::uint8_t>(std::clamp(g + tilt / 3, 0, 255));
                img.at(x, y, 1) = static_cast<std::uint8_t>(g);
                img.at(x, y, 2) = static_cast<std::uint8_t>(std::clamp(g - tilt / 3, 0, 255));
            }
        }
    }
}

} // namespace

Shape shape_from_name(const std::string& name) {
    if (name == "circle") return Shape::circle;
    if (name == "square") return Shape::square;
    if (name == "triangle") return Shape::triangle;
    if (name == "cross") return Shape::cross;
    if (name == "ring") return Shape::ring;
    if (name == "star") return Shape::star;
    if (name == "bar") return Shape::bar;
    if (name == "ellipse") return Shape::ellipse;
    throw std::invalid_argument("unknown shape: " + name);
}

std::string shape_name(Shape s) {
    switch (s) {
        case Shape::circle: return "circle";
        case Shape::square: return "square";
        case Shape::triangle: return "triangle";
        case Shape::cross: return "cross";
        case Shape::ring: return "ring";
        case Shape::star: return "star";
        case Shape::bar: return "bar";
        case Shape::ellipse: return "ellipse";
    }
    return "?";
}

void SceneConfig::validate() const {
    if (image_size < 32) throw std::invalid_argument("SceneConfig: image_size too small");
    if (shape_classes.empty()) throw std::invalid_argument("SceneConfig: no shape classes");
    if (objects_min < 1 || objects_max < objects_min)
        throw std::invalid_argument("SceneConfig: bad objects_per_image range");
    if (scale_min <= 0 || scale_max < scale_min || scale_max > 0.9)
        throw std::invalid_argument("SceneConfig: bad scale range");
    for (const auto& sc : shape_classes) color_from_name(sc.color); // throws on bad name
}

std::vector<ShapeClass> default_shape_classes() {
    return {
        {Shape::circle, "red"},    {Shape::square, "green"}, {Shape::triangle, "blue"},
        {Shape::cross, "yellow"},  {Shape::ring, "magenta"}, {Shape::star, "cyan"},
        {Shape::bar, "orange"},    {Shape::ellipse, "purple"},
    };
}

std::vector<CocoCategory> scene_categories(const SceneConfig& cfg) {
    std::vector<CocoCategory> cats;
    for (size_t i = 0; i < cfg.shape_classes.size(); ++i) {
        const auto& sc = cfg.shape_classes[i];
        cats.push_back({static_cast<int>(i) + 1, shape_name(sc.shape) + "-" + sc.color});
    }
    return cats;
}

ImageRecord generate_scene(const SceneConfig& cfg, int index) {
    cfg.validate();
    const int W = cfg.image_size;
    const int C = static_cast<int>(cfg.shape_classes.size());
    std::mt19937_64 rng(mix(cfg.seed * 0x51ed2700a1b4c2d5ull + static_cast<std::uint64_t>(index)));

    ImageRecord rec;
    rec.image_id = "syn_" + std::to_string(cfg.seed) + "_" + std::to_string(index);
    rec.width = W;
    rec.height = W;
    rec.raster.width = W;
    rec.raster.height = W;
    rec.raster.channels = 3;
    rec.raster.pixels.assign(static_cast<size_t>(W) * W * 3, 0);

    // background: dark base with mild noise
    std::uniform_int_distribution<int> bg_noise(-8, 8);
    for (int y = 0; y < W; ++y)
        for (int x = 0; x < W; ++x) {
            const int n = bg_noise(rng);
            rec.raster.at(x, y, 0) = static_cast<std::uint8_t>(std::clamp(42 + n, 0, 255));
            rec.raster.at(x, y, 1) = static_cast<std::uint8_t>(std::clamp(42 + n, 0, 255));
            rec.raster.at(x, y, 2) = static_cast<std::uint8_t>(std::clamp(48 + n, 0, 255));
        }

    draw_clutter(rec.raster, rng, cfg.clutter_level);

    std::uniform_int_distribution<int> count_dist(cfg.objects_min, cfg.objects_max);
    const int n_objects = count_dist(rng);

    // class choice cycles a seeded permutation so long datasets stay balanced
    std::vector<int> perm(static_cast<size_t>(C));
    for (int i = 0; i < C; ++i) perm[static_cast<size_t>(i)] = i;
    std::mt19937_64 perm_rng(mix(cfg.seed ^ 0xabcdef12345ull));
    std::shuffle(perm.begin(), perm.end(), perm_rng);

    std::uniform_real_distribution<double> scale_dist(cfg.scale_min, cfg.scale_max);
    std::vector<BoundingBox> placed;
    for (int j = 0; j < n_objects; ++j) {
        const int class_index =
            perm[static_cast<size_t>((static_cast<long long>(index) * cfg.objects_max + j) % C)];
        const ShapeClass& sc = cfg.shape_classes[static_cast<size_t>(class_index)];
        const double size = scale_dist(rng) * W;
        const double h = size / 2.0;

        bool ok = false;
        double cx = 0, cy = 0;
        for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
            std::uniform_real_distribution<double> pos(h + 1.0, W - h - 1.0);
            cx = pos(rng);
            cy = pos(rng);
            const BoundingBox candidate(cx - h, cy - h, cx + h, cy + h);
            ok = true;
            for (const auto& other : placed)
                if (iou(candidate, other) > 0.0) { ok = false; break; }
        }
        if (!ok)
            throw std::runtime_error("generate_scene: could not place " + std::to_string(n_objects) +
                                     " non-overlapping objects in scene " + rec.image_id);

        Poly poly;
        if (sc.shape == Shape::triangle) poly = triangle_polygon(cx, cy, h);
        if (sc.shape == Shape::star) poly = star_polygon(cx, cy, h, 0.45 * h);

        const Rgb col = color_from_name(sc.color);
        int min_x = W, min_y = W, max_x = -1, max_y = -1;
        const int x0 = static_cast<int>(std::floor(cx - h)), x1 = static_cast<int>(std::ceil(cx + h));
        const int y0 = static_cast<int>(std::floor(cy - h)), y1 = static_cast<int>(std::ceil(cy + h));
        for (int y = std::max(0, y0); y <= std::min(W - 1, y1); ++y)
            for (int x = std::max(0, x0); x <= std::min(W - 1, x1); ++x)
                if (shape_contains(sc.shape, cx, cy, h, poly, x + 0.5, y + 0.5)) {
                    rec.raster.at(x, y, 0) = col.r;
                    rec.raster.at(x, y, 1) = col.g;
                    rec.raster.at(x, y, 2) = col.b;
                    min_x = std::min(min_x, x);
                    min_y = std::min(min_y, y);
                    max_x = std::max(max_x, x);
                    max_y = std::max(max_y, y);
                }
        if (max_x < min_x) continue; // nothing rendered (degenerate size); skip quietly

        // tight box around the rendered pixels
        const BoundingBox tight(min_x, min_y, max_x + 1, max_y + 1);
        placed.push_back(BoundingBox(cx - h, cy - h, cx + h, cy + h));
        rec.annotations.push_back({class_index + 1, tight});
    }
    return rec;
}

std::vector<ImageRecord> generate_dataset(const SceneConfig& cfg, int n) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    std::vector<ImageRecord> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(generate_scene(cfg, i));
    return out;
}

BoundingBox mask_bounding_box(const Raster& raster, const BoundingBox& hint, double margin) {
    int min_x = raster.width, min_y = raster.height, max_x = -1, max_y = -1;
    const int x0 = std::max(0, static_cast<int>(std::floor(hint.x1 - margin)));
    const int x1 = std::min(raster.width - 1, static_cast<int>(std::ceil(hint.x2 + margin)));
    const int y0 = std::max(0, static_cast<int>(std::floor(hint.y1 - margin)));
    const int y1 = std::min(raster.height - 1, static_cast<int>(std::ceil(hint.y2 + margin)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            // saturated class colors vs muted clutter/background
            const int r = raster.at(x, y, 0), g = raster.at(x, y, 1), b = raster.at(x, y, 2);
            const int mx = std::max({r, g, b}), mn = std::min({r, g, b});
            if (mx - mn > 60 || mx > 180) {
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
        }
    if (max_x < min_x) throw std::runtime_error("mask_bounding_box: no foreground pixels in hint");
    return BoundingBox(min_x, min_y, max_x + 1, max_y + 1);
}

} // namespace owdet
