#include "cbl/oic.hpp"

namespace cbl {

Mat oic_forward(const OicParams& p, int k, const Mat& hidden) {
    CBL_CHECK(k >= 0 && k < p.k(), "head index out of range");
    return softmax_over_classes(affine_forward(p.heads[k], hidden));
}

RefineLabels gen_refine_labels(const Mat& scores, const std::vector<int>& y_img,
                               const std::vector<BBox>& proposals, double neighbor_thresh,
                               double bg_weight_scale) {
    const int num_classes = static_cast<int>(y_img.size());
    const int n = static_cast<int>(proposals.size());
    CBL_CHECK(scores.rows >= num_classes, "score matrix missing class rows");
    CBL_CHECK(scores.cols == n, "scores/proposals length mismatch");

    bool any = false;
    for (int c = 0; c < num_classes; ++c) any = any || y_img[c] != 0;
    CBL_CHECK(any, "image-level label required (no existing class)");

    RefineLabels out;
    out.num_classes = num_classes;
    out.label.assign(n, num_classes);
    out.weight.assign(n, 0.0);

    struct SeedRef {
        int cls;
        int index;
        double score;
    };
    std::vector<SeedRef> seeds;
    for (int c = 0; c < num_classes; ++c) {
        if (!y_img[c]) continue;
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (scores.at(c, i) > scores.at(c, best)) best = i;
        out.seed_of_cls[c] = best;
        seeds.push_back({c, best, scores.at(c, best)});
    }

    for (int i = 0; i < n; ++i) {
        // Owning seed: max IoU, ties to higher seed score then earlier seed.
        double best_iou = -1.0;
        const SeedRef* owner = nullptr;
        for (const auto& s : seeds) {
            const double ov = iou(proposals[i], proposals[s.index]);
            if (ov > best_iou || (ov == best_iou && owner && s.score > owner->score)) {
                best_iou = ov;
                owner = &s;
            }
        }
        if (best_iou > neighbor_thresh) {
            out.label[i] = owner->cls;
            out.weight[i] = owner->score;
        } else {
            out.label[i] = num_classes;
            out.weight[i] = bg_weight_scale * owner->score;  // nearest seed's score
        }
    }

    // Seeds always carry their own class; when two classes share the argmax
    // proposal the lower class index wins.
    for (auto it = seeds.rbegin(); it != seeds.rend(); ++it) {
        out.label[it->index] = it->cls;
        out.weight[it->index] = it->score;
    }
    return out;
}

LossGrad oic_loss(const Mat& probs, const RefineLabels& labels) {
    const int n = probs.cols;
    CBL_CHECK(static_cast<int>(labels.label.size()) == n, "labels/probs length mismatch");
    CBL_CHECK(probs.rows == labels.num_classes + 1, "probs must have C+1 rows");

    LossGrad out;
    out.grad = Mat(probs.rows, probs.cols);
    for (int i = 0; i < n; ++i) {
        const int c = labels.label[i];
        const double w = labels.weight[i];
        if (w == 0.0) continue;
        const double p = probs.at(c, i);
        out.value -= w * std::log(clamp_prob(p));
        if (p > kProbClamp && p < 1.0 - kProbClamp)
            out.grad.at(c, i) = -w / (static_cast<double>(n) * p);
    }
    out.value /= static_cast<double>(n);
    return out;
}

}  // namespace cbl
