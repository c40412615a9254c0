#include "cbl/midn.hpp"

namespace cbl {

MidnScores midn_forward(const MidnParams& p, const Mat& features) {
    MidnScores s;
    s.hidden_pre = affine_forward(p.adapter, features);
    s.hidden = relu(s.hidden_pre);
    s.x_cls = affine_forward(p.cls, s.hidden);
    s.x_det = affine_forward(p.det, s.hidden);
    s.sig_cls = softmax_over_classes(s.x_cls);
    s.sig_det = softmax_over_proposals(s.x_det);

    const int c_rows = s.x_cls.rows;
    const int n = s.x_cls.cols;
    s.x_midn = Mat(c_rows, n);
    s.x_img.assign(static_cast<size_t>(c_rows), 0.0);
    for (int c = 0; c < c_rows; ++c) {
        for (int j = 0; j < n; ++j) {
            const double v = s.sig_cls.at(c, j) * s.sig_det.at(c, j);
            s.x_midn.at(c, j) = v;
            s.x_img[c] += v;
        }
    }
    return s;
}

MidnBranchGrads midn_branches_backward(const MidnParams& p, const MidnScores& cache,
                                       const Mat& d_xmidn) {
    CBL_CHECK(d_xmidn.same_shape(cache.x_midn), "upstream shape mismatch");

    Mat d_sig_cls(d_xmidn.rows, d_xmidn.cols);
    Mat d_sig_det(d_xmidn.rows, d_xmidn.cols);
    for (size_t i = 0; i < d_xmidn.size(); ++i) {
        d_sig_cls.data[i] = d_xmidn.data[i] * cache.sig_det.data[i];
        d_sig_det.data[i] = d_xmidn.data[i] * cache.sig_cls.data[i];
    }
    const Mat d_xcls = softmax_over_classes_backward(cache.sig_cls, d_sig_cls);
    const Mat d_xdet = softmax_over_proposals_backward(cache.sig_det, d_sig_det);

    MidnBranchGrads g;
    g.cls = affine_backward(p.cls, cache.hidden, d_xcls);
    g.det = affine_backward(p.det, cache.hidden, d_xdet);
    g.hidden = g.cls.input;
    for (size_t i = 0; i < g.hidden.size(); ++i) g.hidden.data[i] += g.det.input.data[i];
    return g;
}

Mat fold_image_grad(const Vec& d_ximg, int num_proposals) {
    Mat d(static_cast<int>(d_ximg.size()), num_proposals);
    for (int c = 0; c < d.rows; ++c)
        for (int j = 0; j < num_proposals; ++j) d.at(c, j) = d_ximg[c];
    return d;
}

AffineGrads adapter_backward(const AffineParams& adapter, const Mat& features,
                             const MidnScores& cache, const Mat& d_hidden) {
    const Mat d_pre = relu_backward(cache.hidden_pre, d_hidden);
    return affine_backward(adapter, features, d_pre);
}

MidnLoss midn_loss(const Vec& x_img, const std::vector<int>& y_img) {
    CBL_CHECK(x_img.size() == y_img.size(), "x_img/y length mismatch");
    MidnLoss out;
    out.grad_x_img.assign(x_img.size(), 0.0);
    for (size_t c = 0; c < x_img.size(); ++c) {
        const double x = clamp_prob(x_img[c]);
        const double y = y_img[c] ? 1.0 : 0.0;
        out.value -= y * std::log(x) + (1.0 - y) * std::log(1.0 - x);
        if (x_img[c] > kProbClamp && x_img[c] < 1.0 - kProbClamp)
            out.grad_x_img[c] = (x - y) / (x * (1.0 - x));
    }
    return out;
}

RefineLabels midn_seed_labels(const Mat& x_midn, const std::vector<int>& y_img,
                              const std::vector<BBox>& proposals, double neighbor_thresh,
                              double bg_weight_scale) {
    return gen_refine_labels(x_midn, y_img, proposals, neighbor_thresh, bg_weight_scale);
}

}  // namespace cbl
