#include "cbl/wet.hpp"

namespace cbl {

namespace {

void axpby_params(AffineParams& t, double a, const AffineParams& s, double b) {
    // t = a*t + b*s
    CBL_CHECK(t.same_shape(s), "parameter shape mismatch");
    for (size_t i = 0; i < t.weight.size(); ++i)
        t.weight.data[i] = a * t.weight.data[i] + b * s.weight.data[i];
    for (size_t i = 0; i < t.bias.size(); ++i) t.bias[i] = a * t.bias[i] + b * s.bias[i];
}

}  // namespace

namespace {

// Mean as first + sum-of-differences/S, so an all-equal candidate set
// reduces to that candidate bit-exactly.
AffineParams mean_params(const std::vector<const AffineParams*>& sources) {
    AffineParams mean = *sources.front();
    if (sources.size() == 1) return mean;
    const double inv = 1.0 / static_cast<double>(sources.size());
    for (size_t i = 0; i < mean.weight.size(); ++i) {
        double d = 0.0;
        for (size_t s = 1; s < sources.size(); ++s)
            d += sources[s]->weight.data[i] - mean.weight.data[i];
        mean.weight.data[i] += d * inv;
    }
    for (size_t i = 0; i < mean.bias.size(); ++i) {
        double d = 0.0;
        for (size_t s = 1; s < sources.size(); ++s) d += sources[s]->bias[i] - mean.bias[i];
        mean.bias[i] += d * inv;
    }
    return mean;
}

}  // namespace

void ema_update(AffineParams& teacher, const AffineParams& student, double alpha) {
    axpby_params(teacher, alpha, student, 1.0 - alpha);
}

void aema_update(AffineParams& teacher, const std::vector<const AffineParams*>& students,
                 double alpha) {
    CBL_CHECK(!students.empty(), "A-EMA requires at least one student");
    ema_update(teacher, mean_params(students), alpha);
}

void wema_update(AffineParams& teacher, const std::vector<const AffineParams*>& oic_heads,
                 const AffineParams& cls_branch, double alpha) {
    const auto k = static_cast<double>(oic_heads.size());
    CBL_CHECK(!oic_heads.empty(), "W-EMA requires at least one OIC head");

    const double cls_coeff = (1.0 - alpha) / 2.0;
    const double oic_coeff = (1.0 - alpha) / (2.0 * k);
    const double coeff_sum = alpha + cls_coeff + k * oic_coeff;
    CBL_CHECK(std::abs(coeff_sum - 1.0) < 1e-12, "W-EMA coefficients must sum to 1");

    // Two-step average: OIC mean first, then the CLS branch at equal weight.
    AffineParams target = mean_params(oic_heads);
    CBL_CHECK(target.same_shape(cls_branch), "parameter shape mismatch");
    for (size_t i = 0; i < target.weight.size(); ++i)
        target.weight.data[i] = 0.5 * target.weight.data[i] + 0.5 * cls_branch.weight.data[i];
    for (size_t i = 0; i < target.bias.size(); ++i)
        target.bias[i] = 0.5 * target.bias[i] + 0.5 * cls_branch.bias[i];
    ema_update(teacher, target, alpha);
}

namespace {

void apply_cls_rule(AffineParams& cls, const std::vector<const AffineParams*>& oic_heads,
                    const AffineParams& rcnn_cls, const EmaConfig& cfg, double alpha) {
    switch (cfg.mode) {
        case EmaMode::kSingle:
            ema_update(cls,
                       cfg.single_source == EmaSingleSource::kOicLast ? *oic_heads.back()
                                                                      : rcnn_cls,
                       alpha);
            break;
        case EmaMode::kAverage: {
            std::vector<const AffineParams*> all(oic_heads);
            all.push_back(&rcnn_cls);
            aema_update(cls, all, alpha);
            break;
        }
        case EmaMode::kWeighted:
            wema_update(cls, oic_heads, rcnn_cls, alpha);
            break;
    }
}

}  // namespace

void wet_update(WetParams& teacher, const AffineParams& student_adapter,
                const std::vector<const AffineParams*>& oic_heads, const AffineParams& rcnn_cls,
                const EmaConfig& cfg) {
    cfg.validate();
    CBL_CHECK(!oic_heads.empty(), "teacher update requires OIC heads");
    ema_update(teacher.adapter, student_adapter, cfg.alpha);
    apply_cls_rule(teacher.cls, oic_heads, rcnn_cls, cfg, cfg.alpha);
}

void wet_init(WetParams& teacher, const AffineParams& student_adapter,
              const std::vector<const AffineParams*>& oic_heads, const AffineParams& rcnn_cls,
              const EmaConfig& cfg) {
    cfg.validate();
    teacher.adapter = student_adapter;
    teacher.cls = *oic_heads.back();  // shape template; overwritten below
    for (auto& v : teacher.cls.weight.data) v = 0.0;
    for (auto& v : teacher.cls.bias) v = 0.0;
    apply_cls_rule(teacher.cls, oic_heads, rcnn_cls, cfg, /*alpha=*/0.0);
}

WetForward wet_forward(const WetParams& teacher, const Mat& features) {
    WetForward f;
    f.hidden_pre = affine_forward(teacher.adapter, features);
    f.hidden = relu(f.hidden_pre);
    f.probs = softmax_over_classes(affine_forward(teacher.cls, f.hidden));
    return f;
}

}  // namespace cbl
