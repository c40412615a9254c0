#include "cbl/matrix.hpp"

#include <algorithm>
#include <limits>

namespace cbl {

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> vals) {
    Mat m(static_cast<int>(vals.size()), vals.size() ? static_cast<int>(vals.begin()->size()) : 0);
    int r = 0;
    for (const auto& rowvals : vals) {
        CBL_CHECK(static_cast<int>(rowvals.size()) == m.cols, "ragged initializer");
        int c = 0;
        for (double v : rowvals) m.at(r, c++) = v;
        ++r;
    }
    return m;
}

bool Mat::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Mat softmax_over_classes(const Mat& x) {
    Mat out(x.rows, x.cols);
    for (int j = 0; j < x.cols; ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < x.rows; ++i) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (int i = 0; i < x.rows; ++i) {
            const double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int i = 0; i < x.rows; ++i) out.at(i, j) /= sum;
    }
    return out;
}

Mat softmax_over_proposals(const Mat& x) {
    Mat out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double* src = x.row(i);
        double* dst = out.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < x.cols; ++j) mx = std::max(mx, src[j]);
        double sum = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        for (int j = 0; j < x.cols; ++j) dst[j] /= sum;
    }
    return out;
}

Mat softmax_over_classes_backward(const Mat& s, const Mat& ds) {
    CBL_CHECK(s.same_shape(ds), "shape mismatch");
    Mat dx(s.rows, s.cols);
    for (int j = 0; j < s.cols; ++j) {
        double dot = 0.0;
        for (int i = 0; i < s.rows; ++i) dot += ds.at(i, j) * s.at(i, j);
        for (int i = 0; i < s.rows; ++i) dx.at(i, j) = s.at(i, j) * (ds.at(i, j) - dot);
    }
    return dx;
}

Mat softmax_over_proposals_backward(const Mat& s, const Mat& ds) {
    CBL_CHECK(s.same_shape(ds), "shape mismatch");
    Mat dx(s.rows, s.cols);
    for (int i = 0; i < s.rows; ++i) {
        const double* sr = s.row(i);
        const double* dr = ds.row(i);
        double* out = dx.row(i);
        double dot = 0.0;
        for (int j = 0; j < s.cols; ++j) dot += dr[j] * sr[j];
        for (int j = 0; j < s.cols; ++j) out[j] = sr[j] * (dr[j] - dot);
    }
    return dx;
}

Vec softmax_vec(const Vec& scores) {
    CBL_CHECK(!scores.empty(), "empty softmax input");
    const double mx = *std::max_element(scores.begin(), scores.end());
    Vec out(scores.size());
    double sum = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

Mat affine_forward(const AffineParams& p, const Mat& x) {
    CBL_CHECK(p.in_dim() == x.rows, "affine input dim mismatch");
    Mat y(p.out_dim(), x.cols);
    for (int o = 0; o < p.out_dim(); ++o) {
        double* yr = y.row(o);
        const double b = p.bias[o];
        for (int j = 0; j < x.cols; ++j) yr[j] = b;
        const double* wr = p.weight.row(o);
        for (int k = 0; k < p.in_dim(); ++k) {
            const double w = wr[k];
            if (w == 0.0) continue;
            const double* xr = x.row(k);
            for (int j = 0; j < x.cols; ++j) yr[j] += w * xr[j];
        }
    }
    return y;
}

AffineGrads affine_backward(const AffineParams& p, const Mat& x, const Mat& upstream) {
    CBL_CHECK(p.in_dim() == x.rows, "affine input dim mismatch");
    CBL_CHECK(upstream.rows == p.out_dim() && upstream.cols == x.cols, "upstream shape mismatch");
    AffineGrads g;
    g.weight = Mat(p.out_dim(), p.in_dim());
    g.bias.assign(static_cast<size_t>(p.out_dim()), 0.0);
    g.input = Mat(x.rows, x.cols);

    for (int o = 0; o < p.out_dim(); ++o) {
        const double* ur = upstream.row(o);
        double bsum = 0.0;
        for (int j = 0; j < x.cols; ++j) bsum += ur[j];
        g.bias[o] = bsum;

        double* gwr = g.weight.row(o);
        const double* wr = p.weight.row(o);
        for (int k = 0; k < x.rows; ++k) {
            const double* xr = x.row(k);
            double* gir = g.input.row(k);
            double acc = 0.0;
            const double w = wr[k];
            for (int j = 0; j < x.cols; ++j) {
                acc += ur[j] * xr[j];
                gir[j] += w * ur[j];
            }
            gwr[k] = acc;
        }
    }
    return g;
}

Mat relu(const Mat& x) {
    Mat y(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return y;
}

Mat relu_backward(const Mat& pre, const Mat& upstream) {
    CBL_CHECK(pre.same_shape(upstream), "shape mismatch");
    Mat dx(pre.rows, pre.cols);
    for (size_t i = 0; i < pre.size(); ++i) dx.data[i] = pre.data[i] > 0.0 ? upstream.data[i] : 0.0;
    return dx;
}

double fd_gradcheck(const std::function<double(std::span<const double>)>& loss,
                    std::span<const double> params, std::span<const double> analytic,
                    double eps) {
    CBL_CHECK(eps > 0.0, "eps must be positive");
    CBL_CHECK(params.size() == analytic.size(), "params/gradient length mismatch");

    std::vector<double> theta(params.begin(), params.end());
    double max_rel = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + eps;
        const double fp = loss(theta);
        theta[i] = saved - eps;
        const double fm = loss(theta);
        theta[i] = saved;
        CBL_CHECK(std::isfinite(fp) && std::isfinite(fm), "non-finite loss in gradcheck");
        const double num = (fp - fm) / (2.0 * eps);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(num), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - num) / denom);
    }
    return max_rel;
}

}  // namespace cbl
