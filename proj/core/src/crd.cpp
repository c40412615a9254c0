#include "cbl/crd.hpp"

#include <algorithm>

namespace cbl {

double tau_schedule(long iter_cur, const CrdConfig& cfg) {
    cfg.validate();
    CBL_CHECK(iter_cur >= 0, "iteration must be non-negative");
    const double frac =
        std::min(static_cast<double>(iter_cur) / static_cast<double>(cfg.iter_max), 1.0);
    const double tau = cfg.tau0 + (cfg.tau1 - cfg.tau0) * frac;
    return std::clamp(tau, cfg.tau0, cfg.tau1);
}

PositiveSet build_positive_set(const Mat& x_wet, const std::vector<BBox>& proposals, int cls,
                               double tau) {
    const int n = static_cast<int>(proposals.size());
    CBL_CHECK(n >= 1, "need at least one proposal");
    CBL_CHECK(cls >= 0 && cls < x_wet.rows, "class row out of range");
    CBL_CHECK(x_wet.cols == n, "scores/proposals length mismatch");

    PositiveSet ps;
    ps.cls = cls;
    ps.anchor = 0;
    for (int i = 1; i < n; ++i)
        if (x_wet.at(cls, i) > x_wet.at(cls, ps.anchor)) ps.anchor = i;
    ps.weight = x_wet.at(cls, ps.anchor);

    for (int i = 0; i < n; ++i)
        if (i == ps.anchor || iou(proposals[i], proposals[ps.anchor]) > tau)
            ps.members.push_back(i);
    return ps;
}

RankDistributions rank_distributions(const Mat& x_midn, const Mat& x_wet, const PositiveSet& ps,
                                     double temperature) {
    CBL_CHECK(!ps.members.empty(), "empty positive set");
    Vec s_logits, t_logits;
    s_logits.reserve(ps.members.size());
    t_logits.reserve(ps.members.size());
    for (int j : ps.members) {
        s_logits.push_back(x_midn.at(ps.cls, j) / temperature);
        t_logits.push_back(x_wet.at(ps.cls, j) / temperature);
    }
    return {softmax_vec(s_logits), softmax_vec(t_logits)};
}

CrdLoss crd_loss(const std::vector<PositiveSet>& sets, const Mat& x_midn, const Mat& x_wet,
                 double temperature) {
    CrdLoss out;
    out.grad_x_midn = Mat(x_midn.rows, x_midn.cols);
    for (const auto& ps : sets) {
        const auto [s, t] = rank_distributions(x_midn, x_wet, ps, temperature);
        const double scale = ps.weight / static_cast<double>(ps.members.size());
        for (size_t m = 0; m < ps.members.size(); ++m) {
            out.value += scale * t[m] * (std::log(clamp_prob(t[m])) - std::log(clamp_prob(s[m])));
            out.grad_x_midn.at(ps.cls, ps.members[m]) +=
                scale * (s[m] - t[m]) / temperature;
        }
    }
    return out;
}

}  // namespace cbl
