#pragma once

#include <vector>

#include "cbl/geometry.hpp"
#include "cbl/matrix.hpp"

namespace cbl {

struct CrdConfig {
    double tau0 = 0.5;
    double tau1 = 1.0;
    long iter_max = 80000;  // distillation horizon
    double temperature = 1.0;

    void validate() const {
        if (!(0.0 <= tau0 && tau0 <= tau1 && tau1 <= 1.0))
            throw ConfigError("need 0 <= tau0 <= tau1 <= 1");
        if (iter_max < 1) throw ConfigError("iter_max must be >= 1");
        if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    }
};

/// Neighboring positive proposal set for one existing class: the teacher's
/// top proposal (anchor) plus every proposal overlapping it above tau. The
/// anchor is always a member, and the anchor's teacher score is the loss
/// weight of the whole set.
struct PositiveSet {
    int cls = 0;
    int anchor = 0;
    std::vector<int> members;  // ascending proposal indices, anchor included
    double weight = 0.0;       // teacher score of the anchor on this class
};

/// Linear ramp of the overlap threshold from tau0 to tau1 over iter_max
/// iterations, clamped at both ends.
double tau_schedule(long iter_cur, const CrdConfig& cfg);

/// Builds the positive set for class c. The anchor is the argmax of the
/// teacher's class-c row (ties to the lower index); membership requires
/// IoU(box, anchor box) > tau.
PositiveSet build_positive_set(const Mat& x_wet, const std::vector<BBox>& proposals, int cls,
                               double tau);

/// Softmax rank distributions of the student (x_midn) and teacher (x_wet)
/// class-c scores over the set members, in member order.
struct RankDistributions {
    Vec student;  // s'_c
    Vec teacher;  // t'_c
};
RankDistributions rank_distributions(const Mat& x_midn, const Mat& x_wet,
                                     const PositiveSet& ps, double temperature = 1.0);

/// Weighted KL distillation loss over all existing classes:
/// L = sum_c (w_c / |P_c|) * KL(t'_c || s'_c), teacher treated as constant.
/// Gradient flows to x_midn only through the student distribution.
struct CrdLoss {
    double value = 0.0;
    Mat grad_x_midn;  // C x |R|
};
CrdLoss crd_loss(const std::vector<PositiveSet>& sets, const Mat& x_midn, const Mat& x_wet,
                 double temperature = 1.0);

}  // namespace cbl
