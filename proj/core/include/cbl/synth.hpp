#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cbl/geometry.hpp"
#include "cbl/matrix.hpp"
#include "cbl/rng.hpp"

namespace cbl {

/// Provenance of a proposal within its scene: jittered copy of a ground-truth
/// box, strict sub-rectangle of one ("part"), or background clutter.
enum class ProposalKind : std::uint8_t { kJitter = 0, kPart = 1, kBackground = 2 };

struct GtObject {
    BBox box;
    int cls = 0;  // 0-based class index
};

/// Synthetic scene on the unit canvas: ground truth, the derived image-level
/// label vector, candidate proposals, and pre-pooled proposal features.
struct Scene {
    long id = 0;
    std::vector<GtObject> gt;
    std::vector<int> y_img;  // length C, 0/1
    std::vector<BBox> proposals;
    Mat features;  // feature_dim x |proposals|

    std::vector<ProposalKind> kinds;   // provenance, parallel to proposals
    std::vector<int> parent;           // gt index for jitter/part boxes, -1 otherwise
    bool background_relaxed = false;   // set when clutter placement hit the retry bound

    int num_classes() const { return static_cast<int>(y_img.size()); }
    bool has_class(int c) const { return y_img[c] != 0; }
};

struct GenConfig {
    int num_classes = 5;
    int objects_min = 1;
    int objects_max = 3;
    int proposals_per_scene = 60;
    double jitter_scale = 0.12;        // corner noise relative to box size
    double part_fraction = 0.25;       // share of proposals that are part boxes
    double background_fraction = 0.35; // share of proposals that are clutter
    int feature_dim = 8;
    double noise_sigma = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Discriminative-part feature bonuses: a part box carries extra mass along
/// its parent class prototype plus a dedicated part-signature direction.
/// Clutter boxes carry a background-texture direction of their own.
inline constexpr double kPartProtoBonus = 0.6;
inline constexpr double kPartSigBonus = 1.0;
inline constexpr double kBackgroundSigBonus = 1.0;

/// Fixed orthogonal class prototypes (signed unit basis vectors under a
/// seed-derived permutation). Row c is prototype(c); rows C and C+1 are the
/// part-signature and background-texture directions (own dimensions when
/// feature_dim allows, parent prototype / zero otherwise).
Mat class_prototypes(const GenConfig& cfg);

/// Deterministic scene construction from (cfg.seed, scene_index): ground
/// truth, proposals, and features in one pass.
Scene gen_scene(const GenConfig& cfg, long scene_index);

/// Proposal mixture around the given ground truth; appends kind/parent
/// annotations. Guarantees at least one proposal with IoU >= 0.5 per object.
void gen_proposals(Scene& scene, const GenConfig& cfg, Rng& rng);

/// Proposal features: sum over gt objects of prototype(class) * IoU, plus the
/// part bonus for part boxes, plus Gaussian noise(sigma).
void featurize(Scene& scene, const GenConfig& cfg, Rng& rng);

/// Line-delimited snapshot: one JSON record per scene, fields in order
/// id, gt, y_img, proposals, features (plus provenance extras).
void save_dataset(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> load_dataset(const std::string& path);
void write_scene_record(std::ostream& os, const Scene& s);

/// Convenience: generate scenes [0, count).
std::vector<Scene> gen_dataset(const GenConfig& cfg, long count);

/// Default split: even scene ids train, odd test.
bool is_train_scene(const Scene& s);

}  // namespace cbl
