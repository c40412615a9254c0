#pragma once

#include <array>
#include <vector>

#include "cbl/geometry.hpp"
#include "cbl/matrix.hpp"
#include "cbl/oic.hpp"

namespace cbl {

/// R-CNN head: parallel classification (C+1) and regression (4C) branches on
/// the shared trunk output.
struct RcnnParams {
    AffineParams cls;  // hidden -> C+1
    AffineParams reg;  // hidden -> 4C

    RcnnParams() = default;
    RcnnParams(int hidden_dim, int num_classes)
        : cls(num_classes + 1, hidden_dim), reg(4 * num_classes, hidden_dim) {}
};

struct MsrConfig {
    double mu_s = 0.7;         // score factor for the soft threshold
    double mu_n = 0.05;        // number factor for the search range
    double gamma = 0.4;        // confidence exponent
    double nms_thresh = 0.3;   // suppression level for mined seeds
    double match_thresh = 0.5; // "very close" IoU for the agreement vote

    void validate() const {
        if (mu_s <= 0.0 || mu_s > 1.0) throw ConfigError("mu_s must lie in (0,1]");
        if (mu_n <= 0.0 || mu_n > 1.0) throw ConfigError("mu_n must lie in (0,1]");
        if (gamma <= 0.0) throw ConfigError("gamma must be positive");
        if (nms_thresh < 0.0 || nms_thresh > 1.0)
            throw ConfigError("nms_thresh must lie in [0,1]");
        if (match_thresh < 0.0 || match_thresh > 1.0)
            throw ConfigError("match_thresh must lie in [0,1]");
    }
};

/// A proposal promoted to pseudo ground truth. `agreement` is the fraction of
/// reference score sources (OIC_K, WET) that also keep a proposal very close
/// to it; confidence = score * (1 + agreement^gamma).
struct Seed {
    int index = 0;
    int cls = 0;
    double score = 0.0;      // x^msr at (cls, index)
    double agreement = 0.0;  // p in {0, 0.5, 1}
    double confidence = 0.0; // w_i
};

/// Per-proposal supervision for the R-CNN head. label == C is background and
/// label == -1 means ignored (weight 0). Positives carry a regression target
/// toward their owning seed box.
struct RcnnLabels {
    int num_classes = 0;
    std::vector<int> label;                     // in [0, C] or -1
    std::vector<double> weight;                 // w from owning/nearest seed, 0 when ignored
    std::vector<std::array<double, 4>> target;  // valid for positives only

    int background() const { return num_classes; }
    bool is_positive(size_t i) const {
        return label[i] >= 0 && label[i] < num_classes;
    }
};

/// x^msr = (x^wet + x^oicK) / 2, elementwise.
Mat ensemble_scores(const Mat& x_wet, const Mat& x_oic_k);

/// Soft search-range filter: indices of the top-ceil(mu_n * |R|) proposals of the
/// class-c row whose score is >= mu_s * rowmax. Deterministic ordering
/// (score desc, then index).
std::vector<int> score_filter(const Mat& scores, int cls, double mu_s, double mu_n);

/// Positive-seed mining per existing class: score filter followed by NMS over
/// the survivors; kept proposals become seeds (confidence unset). Falls back
/// to the single top-scoring proposal when the filter leaves nothing.
std::vector<Seed> mine_seeds(const Mat& x_msr, const std::vector<BBox>& proposals,
                             const std::vector<int>& y_img, const MsrConfig& cfg);

/// Agreement vote against the two original score sources (OIC_K and WET):
/// each source votes for a seed iff its own filter keeps a proposal with
/// IoU >= match_thresh to it; p = votes / #sources, w = score * (1 + p^gamma).
void seed_confidence(std::vector<Seed>& seeds, const Mat& x_oic_k, const Mat& x_wet,
                     const std::vector<BBox>& proposals, const MsrConfig& cfg);

/// Labels from seeds: IoU > 0.5 to a seed makes a proposal positive for that
/// seed's class (owning seed = max IoU, ties by higher confidence); max seed
/// IoU < 0.1 means ignored; the rest is background weighted by the nearest
/// seed. Regression targets point from the proposal to its owning seed box.
RcnnLabels gen_rcnn_labels(const std::vector<Seed>& seeds, const std::vector<BBox>& proposals,
                           int num_classes);

/// Fast-R-CNN box parameterization of `seed` relative to `proposal`:
/// (dx/pw, dy/ph, ln(gw/pw), ln(gh/ph)).
std::array<double, 4> regression_targets(const BBox& proposal, const BBox& seed);

/// Inverse of regression_targets.
BBox decode_regression(const BBox& proposal, const std::array<double, 4>& delta);

/// Weighted cross-entropy over the R-CNN class posterior (ignored proposals
/// contribute nothing through their zero weight).
LossGrad rcnn_cls_loss(const Mat& probs, const RcnnLabels& labels);

/// Weighted smooth-L1 over the 4 coordinates of each positive's class row:
/// L = (1/|R|) sum_i w_i sum_d smoothL1(t[4c+d, i] - v[d]).
LossGrad rcnn_reg_loss(const Mat& reg_out, const RcnnLabels& labels);

/// L_rcnn = classification part + regression part.
double rcnn_loss(double cls_part, double reg_part);

}  // namespace cbl
