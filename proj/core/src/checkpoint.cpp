#include "cbl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cbl {

namespace {

constexpr char kMagic[8] = {'C', 'B', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw RuntimeAbort("checkpoint truncated");
    return v;
}

void write_tensor(std::ostream& os, const TensorRef& ref) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ref.name.size()));
    os.write(ref.name.data(), static_cast<std::streamsize>(ref.name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ref.rows));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ref.cols));
    os.write(reinterpret_cast<const char*>(ref.data->data()),
             static_cast<std::streamsize>(ref.data->size() * sizeof(double)));
}

struct RawTensor {
    std::string name;
    std::uint32_t rows = 0, cols = 0;
    std::vector<double> data;
};

RawTensor read_tensor(std::istream& is) {
    RawTensor t;
    const auto len = read_pod<std::uint32_t>(is);
    t.name.resize(len);
    is.read(t.name.data(), len);
    t.rows = read_pod<std::uint32_t>(is);
    t.cols = read_pod<std::uint32_t>(is);
    t.data.resize(static_cast<size_t>(t.rows) * t.cols);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw RuntimeAbort("checkpoint truncated");
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open for writing: " + path);

    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, kVersion);
    write_pod<std::uint8_t>(os, ckpt.has_teacher ? 1 : 0);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.model.num_classes));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.model.feature_dim));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.model.hidden_dim));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.model.k_heads()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(ckpt.iteration));

    auto& model = const_cast<ModelParams&>(ckpt.model);
    auto refs = tensor_refs(model);
    std::vector<TensorRef> all(refs);
    if (ckpt.has_teacher) {
        auto& teacher = const_cast<WetParams&>(ckpt.teacher);
        for (auto& r : tensor_refs(teacher, "teacher.")) all.push_back(r);
    }
    CBL_CHECK(ckpt.velocity.size() == refs.size(), "velocity/tensor count mismatch");
    std::vector<Vec> vel = ckpt.velocity;
    for (size_t i = 0; i < vel.size(); ++i)
        all.push_back({"velocity." + refs[i].name, &vel[i], refs[i].rows, refs[i].cols});

    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(all.size()));
    for (const auto& r : all) write_tensor(os, r);
    if (!os) throw RuntimeAbort("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path);

    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw RuntimeAbort("not a checkpoint file: " + path);
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion) throw RuntimeAbort("unsupported checkpoint version");

    CheckpointData ckpt;
    ckpt.has_teacher = read_pod<std::uint8_t>(is) != 0;
    const auto classes = read_pod<std::uint32_t>(is);
    const auto features = read_pod<std::uint32_t>(is);
    const auto hidden = read_pod<std::uint32_t>(is);
    const auto k = read_pod<std::uint32_t>(is);
    ckpt.iteration = static_cast<long>(read_pod<std::uint64_t>(is));

    ckpt.model = ModelParams(static_cast<int>(classes), static_cast<int>(features),
                             static_cast<int>(hidden), static_cast<int>(k));
    ckpt.teacher.adapter = AffineParams(static_cast<int>(hidden), static_cast<int>(features));
    ckpt.teacher.cls = AffineParams(static_cast<int>(classes) + 1, static_cast<int>(hidden));

    auto refs = tensor_refs(ckpt.model);
    ckpt.velocity.resize(refs.size());
    std::vector<TensorRef> all(refs);
    if (ckpt.has_teacher)
        for (auto& r : tensor_refs(ckpt.teacher, "teacher.")) all.push_back(r);
    for (size_t i = 0; i < refs.size(); ++i) {
        ckpt.velocity[i].assign(refs[i].data->size(), 0.0);
        all.push_back({"velocity." + refs[i].name, &ckpt.velocity[i], refs[i].rows, refs[i].cols});
    }

    const auto count = read_pod<std::uint32_t>(is);
    if (count != all.size()) throw RuntimeAbort("checkpoint tensor count mismatch");
    for (std::uint32_t t = 0; t < count; ++t) {
        RawTensor raw = read_tensor(is);
        bool found = false;
        for (auto& r : all) {
            if (r.name != raw.name) continue;
            if (r.rows != static_cast<int>(raw.rows) || r.cols != static_cast<int>(raw.cols))
                throw RuntimeAbort("checkpoint shape mismatch for " + raw.name);
            *r.data = std::move(raw.data);
            found = true;
            break;
        }
        if (!found) throw RuntimeAbort("unexpected checkpoint tensor: " + raw.name);
    }
    return ckpt;
}

}  // namespace cbl
