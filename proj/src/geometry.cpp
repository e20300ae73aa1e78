#include "owdet/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace owdet {

BoundingBox::BoundingBox(double x1_, double y1_, double x2_, double y2_)
    : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
    if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2))
        throw std::invalid_argument("BoundingBox: non-finite coordinate");
    if (x2 <= x1 || y2 <= y1)
        throw std::invalid_argument(
            "BoundingBox: degenerate extent (" + std::to_string(x1) + "," + std::to_string(y1) +
            "," + std::to_string(x2) + "," + std::to_string(y2) + ")");
}

BoundingBox BoundingBox::from_xywh(double x, double y, double w, double h) {
    return BoundingBox(x, y, x + w, y + h);
}

BoundingBox BoundingBox::clipped(double w, double h) const {
    double cx1 = std::clamp(x1, 0.0, w);
    double cy1 = std::clamp(y1, 0.0, h);
    double cx2 = std::clamp(x2, 0.0, w);
    double cy2 = std::clamp(y2, 0.0, h);
    // keep a sliver rather than collapsing to a zero-area box
    if (cx2 <= cx1) cx2 = std::min(cx1 + 1e-3, w), cx1 = cx2 - 1e-3;
    if (cy2 <= cy1) cy2 = std::min(cy1 + 1e-3, h), cy1 = cy2 - 1e-3;
    return BoundingBox(cx1, cy1, cx2, cy2);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix1 = std::max(a.x1, b.x1);
    const double iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2);
    const double iy2 = std::min(a.y2, b.y2);
    const double iw = std::max(0.0, ix2 - ix1);
    const double ih = std::max(0.0, iy2 - iy1);
    const double inter = iw * ih;
    if (inter <= 0.0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

} // namespace owdet
