#pragma once

#include <stdexcept>
#include <string>

namespace owdet {

/// Axis-aligned box stored in corner form. Corner form is used everywhere
/// internally; (x, y, w, h) appears only at I/O boundaries.
struct BoundingBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    BoundingBox() = default;
    BoundingBox(double x1_, double y1_, double x2_, double y2_);

    static BoundingBox from_xywh(double x, double y, double w, double h);

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }

    /// Strict interiority (used by ltrb encoding, which needs positive
    /// distances to every edge).
    bool contains(double px, double py) const {
        return px > x1 && px < x2 && py > y1 && py < y2;
    }

    BoundingBox clipped(double w, double h) const;

    bool operator==(const BoundingBox&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

} // namespace owdet
