#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cbl/check.hpp"

namespace cbl {

/// Dense row-major matrix of doubles. Score tables are laid out as
/// (classes x proposals).
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
        CBL_CHECK(r >= 0 && c >= 0, "negative shape");
    }

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> vals);

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
};

using Vec = std::vector<double>;

/// Column-wise softmax: each column (the class axis of a C x N score table)
/// sums to 1. Max-subtracted for stability.
Mat softmax_over_classes(const Mat& x);

/// Row-wise softmax: each row (the proposal axis) sums to 1.
Mat softmax_over_proposals(const Mat& x);

/// Backward of softmax_over_classes: given s = softmax(x) column-wise and
/// dL/ds, returns dL/dx.
Mat softmax_over_classes_backward(const Mat& s, const Mat& ds);

/// Backward of softmax_over_proposals.
Mat softmax_over_proposals_backward(const Mat& s, const Mat& ds);

/// Softmax of an arbitrary score subset (used for rank distributions).
Vec softmax_vec(const Vec& scores);

/// Affine layer y = W x + b with W (out x in) and bias broadcast over columns.
struct AffineParams {
    Mat weight;  // out x in
    Vec bias;    // out

    AffineParams() = default;
    AffineParams(int out, int in) : weight(out, in), bias(static_cast<size_t>(out), 0.0) {}

    int out_dim() const { return weight.rows; }
    int in_dim() const { return weight.cols; }
    bool same_shape(const AffineParams& o) const {
        return weight.same_shape(o.weight) && bias.size() == o.bias.size();
    }
};

struct AffineGrads {
    Mat weight;
    Vec bias;
    Mat input;
};

Mat affine_forward(const AffineParams& p, const Mat& x);
AffineGrads affine_backward(const AffineParams& p, const Mat& x, const Mat& upstream);

/// Elementwise rectifier and its mask-backward.
Mat relu(const Mat& x);
Mat relu_backward(const Mat& pre, const Mat& upstream);

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-12;

inline double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

/// Central-difference gradient check. `loss` must be a deterministic function
/// of `params`; `analytic` is the gradient under test. Returns the max
/// relative error over coordinates with denominator max(|a|, |n|, 1e-8).
double fd_gradcheck(const std::function<double(std::span<const double>)>& loss,
                    std::span<const double> params, std::span<const double> analytic,
                    double eps);

}  // namespace cbl
