#pragma once

#include <vector>

#include "cbl/matrix.hpp"

namespace cbl {

/// Which update rule feeds the teacher classification head. The single-source
/// modes mirror the student's last OIC head or the R-CNN classification
/// branch; `average` pools all K+1 candidates uniformly; `weighted` gives the
/// classification branch half of the student mass.
enum class EmaMode { kSingle, kAverage, kWeighted };
enum class EmaSingleSource { kOicLast, kRcnnCls };

struct EmaConfig {
    double alpha = 0.999;
    EmaMode mode = EmaMode::kWeighted;
    EmaSingleSource single_source = EmaSingleSource::kOicLast;  // single mode only

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0,1]");
    }
};

/// Mirrored teacher: feature adapter plus one C+1 classification head, shapes
/// identical to the corresponding student networks.
struct WetParams {
    AffineParams adapter;
    AffineParams cls;
};

/// theta_t <- alpha * theta_t + (1 - alpha) * theta_s, elementwise.
void ema_update(AffineParams& teacher, const AffineParams& student, double alpha);

/// theta_t <- alpha * theta_t + (1 - alpha)/S * sum_s theta_s.
void aema_update(AffineParams& teacher, const std::vector<const AffineParams*>& students,
                 double alpha);

/// theta_t <- alpha * theta_t + (1-alpha)/2 * ((1/K) sum_k theta_k + theta_cls).
/// The coefficient-sum identity alpha + (1-alpha)/2 + K*(1-alpha)/(2K) = 1 is
/// checked on every call.
void wema_update(AffineParams& teacher, const std::vector<const AffineParams*>& oic_heads,
                 const AffineParams& cls_branch, double alpha);

/// One per-iteration teacher update: plain EMA for the adapter, and the
/// configured rule for the classification head.
void wet_update(WetParams& teacher, const AffineParams& student_adapter,
                const std::vector<const AffineParams*>& oic_heads,
                const AffineParams& rcnn_cls, const EmaConfig& cfg);

/// Teacher initialization: the mode's student combination copied exactly
/// (equivalent to one update with alpha = 0).
void wet_init(WetParams& teacher, const AffineParams& student_adapter,
              const std::vector<const AffineParams*>& oic_heads, const AffineParams& rcnn_cls,
              const EmaConfig& cfg);

struct WetForward {
    Mat hidden_pre;
    Mat hidden;
    Mat probs;  // (C+1) x |R|, per-proposal distribution
};

/// Teacher scores x^wet: per-proposal softmax over C+1 classes.
WetForward wet_forward(const WetParams& teacher, const Mat& features);

}  // namespace cbl
