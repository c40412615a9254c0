#pragma once

#include <map>
#include <vector>

#include "cbl/geometry.hpp"
#include "cbl/matrix.hpp"

namespace cbl {

/// K cascaded online instance classifier heads; each emits C+1 scores per
/// proposal (index C is background). Heads read the shared trunk output.
struct OicParams {
    std::vector<AffineParams> heads;

    OicParams() = default;
    OicParams(int k, int hidden_dim, int num_classes) {
        CBL_CHECK(k >= 1, "K must be >= 1");
        heads.assign(static_cast<size_t>(k), AffineParams(num_classes + 1, hidden_dim));
    }

    int k() const { return static_cast<int>(heads.size()); }
};

/// Hard pseudo labels for one refinement stage. `label[i]` is the assigned
/// class of proposal i (background == num_classes); every proposal carries the
/// score of its owning/nearest seed as loss weight.
struct RefineLabels {
    int num_classes = 0;
    std::vector<int> label;          // per proposal, in [0, num_classes]
    std::vector<double> weight;      // w_i >= 0
    std::map<int, int> seed_of_cls;  // class -> seed proposal index

    int background() const { return num_classes; }
};

/// Per-proposal class posterior of head k: softmax over the C+1 classes, so
/// every proposal column sums to 1.
Mat oic_forward(const OicParams& p, int k, const Mat& hidden);

/// Top-scoring pseudo labeling. For each class c with y_c = 1 the
/// argmax-score proposal becomes the seed (ties to the lower index);
/// proposals overlapping a seed with IoU > neighbor_thresh take that seed's
/// class (max-IoU seed wins), everything else is background. Weights are the
/// owning seed's score; background proposals take the nearest seed's score,
/// scaled by bg_weight_scale (1 = full weight, the usual convention).
/// `scores` rows 0..C-1 are class scores; extra rows (background) are ignored.
RefineLabels gen_refine_labels(const Mat& scores, const std::vector<int>& y_img,
                               const std::vector<BBox>& proposals, double neighbor_thresh,
                               double bg_weight_scale = 1.0);

struct LossGrad {
    double value = 0.0;
    Mat grad;  // d loss / d probs (or d scores), same shape as the input
};

/// Weighted cross-entropy over per-proposal posteriors:
/// L = -(1/|R|) sum_i w_i log p(label_i, i), probabilities clamped before logs.
LossGrad oic_loss(const Mat& probs, const RefineLabels& labels);

}  // namespace cbl
