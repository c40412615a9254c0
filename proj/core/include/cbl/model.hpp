#pragma once

#include <string>
#include <vector>

#include "cbl/midn.hpp"
#include "cbl/msr.hpp"
#include "cbl/oic.hpp"
#include "cbl/rng.hpp"
#include "cbl/wet.hpp"

namespace cbl {

/// The full student: MIDN (owning the shared feature adapter), K online
/// instance classifiers, and the R-CNN head. All heads read the rectified
/// adapter output.
struct ModelParams {
    int num_classes = 0;
    int feature_dim = 0;
    int hidden_dim = 0;

    MidnParams midn;
    OicParams oic;
    RcnnParams rcnn;

    ModelParams() = default;
    ModelParams(int classes, int features, int hidden, int k)
        : num_classes(classes),
          feature_dim(features),
          hidden_dim(hidden),
          midn(features, hidden, classes),
          oic(k, hidden, classes),
          rcnn(hidden, classes) {}

    int k_heads() const { return oic.k(); }

    /// Zero-filled clone with identical shapes; used as a gradient holder.
    ModelParams zeros_like() const;
};

/// Gaussian(0, 0.01) weights, zero biases.
ModelParams init_model(int num_classes, int feature_dim, int hidden_dim, int k_heads, Rng& rng);

/// Mutable view of one parameter tensor (weights as rows x cols, biases as
/// 1 x n). The ordering is the canonical one used by SGD state and the
/// checkpoint format.
struct TensorRef {
    std::string name;
    std::vector<double>* data;
    int rows;
    int cols;
};

std::vector<TensorRef> tensor_refs(ModelParams& m);
std::vector<TensorRef> tensor_refs(WetParams& t, const std::string& prefix);

Vec flatten(const std::vector<TensorRef>& refs);
void unflatten(const std::vector<TensorRef>& refs, std::span<const double> values);

/// Pointers to the K OIC heads, for the teacher update rules.
std::vector<const AffineParams*> oic_head_ptrs(const ModelParams& m);

}  // namespace cbl
