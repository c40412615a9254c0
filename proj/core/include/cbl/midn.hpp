#pragma once

#include <vector>

#include "cbl/matrix.hpp"
#include "cbl/oic.hpp"

namespace cbl {

/// Two-stream multiple-instance detection head. The feature adapter is the
/// shared trunk: every other head (OICs, R-CNN branches) reads its rectified
/// output.
struct MidnParams {
    AffineParams adapter;  // feature_dim -> hidden_dim
    AffineParams cls;      // hidden_dim -> C
    AffineParams det;      // hidden_dim -> C

    MidnParams() = default;
    MidnParams(int feature_dim, int hidden_dim, int num_classes)
        : adapter(hidden_dim, feature_dim),
          cls(num_classes, hidden_dim),
          det(num_classes, hidden_dim) {}
};

/// Forward results plus the caches the backward pass needs. x_midn is the
/// elementwise product of the class-axis and proposal-axis softmaxes; x_img
/// sums it over proposals.
struct MidnScores {
    Mat hidden_pre;  // trunk output before rectification
    Mat hidden;      // shared trunk output (read by all heads)
    Mat x_cls, x_det;        // pre-softmax branch scores, C x |R|
    Mat sig_cls, sig_det;    // softmax caches
    Mat x_midn;              // C x |R|
    Vec x_img;               // length C, entries in (0, 1]
};

MidnScores midn_forward(const MidnParams& p, const Mat& features);

/// Gradients of the two branch heads given combined upstream d(loss)/d(x_midn)
/// (callers fold the x_img chain in beforehand); returns the summed gradient
/// reaching the shared hidden features.
struct MidnBranchGrads {
    AffineGrads cls;
    AffineGrads det;
    Mat hidden;
};
MidnBranchGrads midn_branches_backward(const MidnParams& p, const MidnScores& cache,
                                       const Mat& d_xmidn);

/// Folds dL/dx_img into dL/dx_midn (the sum-over-proposals chain).
Mat fold_image_grad(const Vec& d_ximg, int num_proposals);

/// Trunk backward: rectifier mask then the adapter affine.
AffineGrads adapter_backward(const AffineParams& adapter, const Mat& features,
                             const MidnScores& cache, const Mat& d_hidden);

struct MidnLoss {
    double value = 0.0;
    Vec grad_x_img;
};

/// Image-level binary cross-entropy with probabilities clamped before logs.
MidnLoss midn_loss(const Vec& x_img, const std::vector<int>& y_img);

/// Pseudo labels for the first refinement stage, generated from the MIDN
/// scores with the shared top-scoring rule.
RefineLabels midn_seed_labels(const Mat& x_midn, const std::vector<int>& y_img,
                              const std::vector<BBox>& proposals, double neighbor_thresh,
                              double bg_weight_scale = 1.0);

}  // namespace cbl
