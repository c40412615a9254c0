#pragma once

#include <string>
#include <vector>

#include "cbl/model.hpp"

namespace cbl {

/// Everything needed to resume or evaluate a run: student, mirrored teacher
/// (optional), optimizer velocity, and the iteration counter.
struct CheckpointData {
    ModelParams model;
    WetParams teacher;
    bool has_teacher = false;
    std::vector<Vec> velocity;  // parallel to tensor_refs(model)
    long iteration = 0;
};

/// Self-describing binary container: magic "CBLCKPT1", version, shape header,
/// then named tensors as little-endian 64-bit floats.
void save_checkpoint(const std::string& path, const CheckpointData& ckpt);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace cbl
