#include "cbl/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace cbl {

double iou(const BBox& a, const BBox& b) {
    const double ix1 = std::max(a.x1, b.x1);
    const double iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2);
    const double iy2 = std::min(a.y2, b.y2);
    const double iw = ix2 - ix1;
    const double ih = iy2 - iy1;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

std::vector<int> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                     double thresh) {
    CBL_CHECK(boxes.size() == scores.size(), "boxes/scores length mismatch");
    CBL_CHECK(thresh >= 0.0, "negative NMS threshold");

    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    std::vector<int> kept;
    kept.reserve(boxes.size());
    for (int idx : order) {
        bool suppressed = false;
        for (int k : kept) {
            if (iou(boxes[idx], boxes[k]) > thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

}  // namespace cbl
