#include "cbl/model.hpp"

#include <cmath>

namespace cbl {

ModelParams ModelParams::zeros_like() const {
    return ModelParams(num_classes, feature_dim, hidden_dim, k_heads());
}

ModelParams init_model(int num_classes, int feature_dim, int hidden_dim, int k_heads, Rng& rng) {
    ModelParams m(num_classes, feature_dim, hidden_dim, k_heads);
    for (auto& ref : tensor_refs(m)) {
        if (ref.name.ends_with(".bias")) continue;
        for (auto& v : *ref.data) v = 0.01 * rng.normal();
    }
    return m;
}

namespace {

void push_affine(std::vector<TensorRef>& out, const std::string& name, AffineParams& p) {
    out.push_back({name + ".weight", &p.weight.data, p.weight.rows, p.weight.cols});
    out.push_back({name + ".bias", &p.bias, 1, static_cast<int>(p.bias.size())});
}

}  // namespace

std::vector<TensorRef> tensor_refs(ModelParams& m) {
    std::vector<TensorRef> refs;
    push_affine(refs, "adapter", m.midn.adapter);
    push_affine(refs, "midn.cls", m.midn.cls);
    push_affine(refs, "midn.det", m.midn.det);
    for (int k = 0; k < m.oic.k(); ++k)
        push_affine(refs, "oic." + std::to_string(k), m.oic.heads[k]);
    push_affine(refs, "rcnn.cls", m.rcnn.cls);
    push_affine(refs, "rcnn.reg", m.rcnn.reg);
    return refs;
}

std::vector<TensorRef> tensor_refs(WetParams& t, const std::string& prefix) {
    std::vector<TensorRef> refs;
    push_affine(refs, prefix + "adapter", t.adapter);
    push_affine(refs, prefix + "cls", t.cls);
    return refs;
}

Vec flatten(const std::vector<TensorRef>& refs) {
    Vec out;
    for (const auto& r : refs) out.insert(out.end(), r.data->begin(), r.data->end());
    return out;
}

void unflatten(const std::vector<TensorRef>& refs, std::span<const double> values) {
    size_t pos = 0;
    for (const auto& r : refs) {
        CBL_CHECK(pos + r.data->size() <= values.size(), "flat vector too short");
        std::copy(values.begin() + pos, values.begin() + pos + r.data->size(), r.data->begin());
        pos += r.data->size();
    }
    CBL_CHECK(pos == values.size(), "flat vector length mismatch");
}

std::vector<const AffineParams*> oic_head_ptrs(const ModelParams& m) {
    std::vector<const AffineParams*> ptrs;
    for (const auto& h : m.oic.heads) ptrs.push_back(&h);
    return ptrs;
}

}  // namespace cbl
