#pragma once

#include <vector>

#include "cbl/check.hpp"

namespace cbl {

/// Axis-aligned box in continuous scene coordinates. Areas are
/// (x2-x1)*(y2-y1) with no pixel +1 convention.
struct BBox {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    BBox() = default;
    BBox(double x1_, double y1_, double x2_, double y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
        CBL_CHECK(x2 > x1 && y2 > y1, "degenerate box");
    }

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }

    bool operator==(const BBox& o) const {
        return x1 == o.x1 && y1 == o.y1 && x2 == o.x2 && y2 == o.y2;
    }
};

/// Intersection-over-union (Jaccard overlap). Symmetric, 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Greedy non-maximum suppression. Boxes are visited in descending score
/// order (score ties broken by lower index); a box is suppressed iff its IoU
/// with an already-kept box exceeds `thresh`. Kept indices are returned in
/// descending score order.
std::vector<int> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                     double thresh);

}  // namespace cbl
