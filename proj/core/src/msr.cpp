#include "cbl/msr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cbl {

Mat ensemble_scores(const Mat& x_wet, const Mat& x_oic_k) {
    CBL_CHECK(x_wet.same_shape(x_oic_k), "ensemble inputs must share shape");
    Mat out(x_wet.rows, x_wet.cols);
    for (size_t i = 0; i < out.size(); ++i)
        out.data[i] = 0.5 * (x_wet.data[i] + x_oic_k.data[i]);
    return out;
}

std::vector<int> score_filter(const Mat& scores, int cls, double mu_s, double mu_n) {
    const int n = scores.cols;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores.at(cls, a) != scores.at(cls, b)) return scores.at(cls, a) > scores.at(cls, b);
        return a < b;
    });

    const int keep = static_cast<int>(std::ceil(mu_n * n));
    order.resize(std::min<int>(std::max(keep, 1), n));

    const double sigma_s = mu_s * scores.at(cls, order.front());
    std::vector<int> survivors;
    for (int i : order)
        if (scores.at(cls, i) >= sigma_s) survivors.push_back(i);
    return survivors;
}

std::vector<Seed> mine_seeds(const Mat& x_msr, const std::vector<BBox>& proposals,
                             const std::vector<int>& y_img, const MsrConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(proposals.size());
    CBL_CHECK(x_msr.cols == n, "scores/proposals length mismatch");

    std::vector<Seed> seeds;
    for (int c = 0; c < static_cast<int>(y_img.size()); ++c) {
        if (!y_img[c]) continue;
        std::vector<int> survivors = score_filter(x_msr, c, cfg.mu_s, cfg.mu_n);
        if (survivors.empty()) {
            int best = 0;
            for (int i = 1; i < n; ++i)
                if (x_msr.at(c, i) > x_msr.at(c, best)) best = i;
            survivors.push_back(best);
        }
        std::vector<BBox> boxes;
        std::vector<double> scores;
        for (int i : survivors) {
            boxes.push_back(proposals[i]);
            scores.push_back(x_msr.at(c, i));
        }
        for (int k : nms(boxes, scores, cfg.nms_thresh)) {
            Seed s;
            s.index = survivors[k];
            s.cls = c;
            s.score = x_msr.at(c, s.index);
            seeds.push_back(s);
        }
    }
    return seeds;
}

void seed_confidence(std::vector<Seed>& seeds, const Mat& x_oic_k, const Mat& x_wet,
                     const std::vector<BBox>& proposals, const MsrConfig& cfg) {
    cfg.validate();
    const std::array<const Mat*, 2> sources = {&x_oic_k, &x_wet};
    for (auto& seed : seeds) {
        int votes = 0;
        for (const Mat* src : sources) {
            const auto survivors = score_filter(*src, seed.cls, cfg.mu_s, cfg.mu_n);
            for (int i : survivors) {
                if (iou(proposals[i], proposals[seed.index]) >= cfg.match_thresh) {
                    ++votes;
                    break;
                }
            }
        }
        seed.agreement = static_cast<double>(votes) / static_cast<double>(sources.size());
        seed.confidence = seed.score * (1.0 + std::pow(seed.agreement, cfg.gamma));
    }
}

RcnnLabels gen_rcnn_labels(const std::vector<Seed>& seeds, const std::vector<BBox>& proposals,
                           int num_classes) {
    CBL_CHECK(!seeds.empty(), "seed set must be non-empty");
    const int n = static_cast<int>(proposals.size());
    for (const auto& s : seeds) CBL_CHECK(s.cls >= 0 && s.cls < num_classes, "seed class range");

    RcnnLabels out;
    out.num_classes = num_classes;
    out.label.assign(n, num_classes);
    out.weight.assign(n, 0.0);
    out.target.assign(n, {0.0, 0.0, 0.0, 0.0});

    for (int i = 0; i < n; ++i) {
        double best_iou = -1.0;
        const Seed* owner = nullptr;
        for (const auto& s : seeds) {
            const double ov = iou(proposals[i], proposals[s.index]);
            if (ov > best_iou ||
                (ov == best_iou && owner && s.confidence > owner->confidence)) {
                best_iou = ov;
                owner = &s;
            }
        }
        if (best_iou > 0.5) {
            out.label[i] = owner->cls;
            out.weight[i] = owner->confidence;
            out.target[i] = regression_targets(proposals[i], proposals[owner->index]);
        } else if (best_iou < 0.1) {
            out.label[i] = -1;  // ignored
            out.weight[i] = 0.0;
        } else {
            out.label[i] = num_classes;
            out.weight[i] = owner->confidence;
        }
    }
    return out;
}

std::array<double, 4> regression_targets(const BBox& proposal, const BBox& seed) {
    return {(seed.cx() - proposal.cx()) / proposal.width(),
            (seed.cy() - proposal.cy()) / proposal.height(),
            std::log(seed.width() / proposal.width()),
            std::log(seed.height() / proposal.height())};
}

BBox decode_regression(const BBox& proposal, const std::array<double, 4>& delta) {
    const double cx = proposal.cx() + delta[0] * proposal.width();
    const double cy = proposal.cy() + delta[1] * proposal.height();
    const double w = proposal.width() * std::exp(delta[2]);
    const double h = proposal.height() * std::exp(delta[3]);
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

LossGrad rcnn_cls_loss(const Mat& probs, const RcnnLabels& labels) {
    const int n = probs.cols;
    CBL_CHECK(static_cast<int>(labels.label.size()) == n, "labels/probs length mismatch");
    CBL_CHECK(probs.rows == labels.num_classes + 1, "probs must have C+1 rows");

    LossGrad out;
    out.grad = Mat(probs.rows, probs.cols);
    for (int i = 0; i < n; ++i) {
        if (labels.label[i] < 0 || labels.weight[i] == 0.0) continue;
        const int c = labels.label[i];
        const double w = labels.weight[i];
        const double p = probs.at(c, i);
        out.value -= w * std::log(clamp_prob(p));
        if (p > kProbClamp && p < 1.0 - kProbClamp)
            out.grad.at(c, i) = -w / (static_cast<double>(n) * p);
    }
    out.value /= static_cast<double>(n);
    return out;
}

namespace {

inline double smooth_l1(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

inline double smooth_l1_grad(double d) {
    if (d > 1.0) return 1.0;
    if (d < -1.0) return -1.0;
    return d;
}

}  // namespace

LossGrad rcnn_reg_loss(const Mat& reg_out, const RcnnLabels& labels) {
    const int n = reg_out.cols;
    CBL_CHECK(static_cast<int>(labels.label.size()) == n, "labels/reg length mismatch");
    CBL_CHECK(reg_out.rows == 4 * labels.num_classes, "reg output must have 4C rows");

    LossGrad out;
    out.grad = Mat(reg_out.rows, reg_out.cols);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int i = 0; i < n; ++i) {
        if (!labels.is_positive(i) || labels.weight[i] == 0.0) continue;
        const int base = 4 * labels.label[i];
        const double w = labels.weight[i];
        for (int d = 0; d < 4; ++d) {
            const double diff = reg_out.at(base + d, i) - labels.target[i][d];
            out.value += w * smooth_l1(diff);
            out.grad.at(base + d, i) = inv_n * w * smooth_l1_grad(diff);
        }
    }
    out.value *= inv_n;
    return out;
}

double rcnn_loss(double cls_part, double reg_part) { return cls_part + reg_part; }

}  // namespace cbl
