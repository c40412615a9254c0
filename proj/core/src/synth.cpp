#include "cbl/synth.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace cbl {

namespace {

constexpr int kBackgroundRetries = 50;
constexpr double kMinObjectSize = 0.12;
constexpr double kMaxObjectSize = 0.45;

BBox sample_box(Rng& rng, double min_size, double max_size) {
    const double w = rng.uniform(min_size, max_size);
    const double h = rng.uniform(min_size, max_size);
    const double x1 = rng.uniform(0.0, 1.0 - w);
    const double y1 = rng.uniform(0.0, 1.0 - h);
    return {x1, y1, x1 + w, y1 + h};
}

BBox jitter_box(const BBox& b, double scale, Rng& rng) {
    if (scale == 0.0) return b;
    for (int attempt = 0; attempt < 20; ++attempt) {
        const double dx1 = rng.uniform(-scale, scale) * b.width();
        const double dy1 = rng.uniform(-scale, scale) * b.height();
        const double dx2 = rng.uniform(-scale, scale) * b.width();
        const double dy2 = rng.uniform(-scale, scale) * b.height();
        const double x1 = std::clamp(b.x1 + dx1, 0.0, 1.0);
        const double y1 = std::clamp(b.y1 + dy1, 0.0, 1.0);
        const double x2 = std::clamp(b.x2 + dx2, 0.0, 1.0);
        const double y2 = std::clamp(b.y2 + dy2, 0.0, 1.0);
        if (x2 > x1 && y2 > y1) return {x1, y1, x2, y2};
    }
    return b;
}

BBox part_box(const BBox& b, Rng& rng) {
    // Strict sub-rectangle covering 15-45% of the parent area.
    const double area_frac = rng.uniform(0.15, 0.45);
    const double wf = std::sqrt(area_frac) * rng.uniform(0.8, 1.25);
    const double w = std::min(wf, 0.9) * b.width();
    const double h = std::min(area_frac / (w / b.width()), 0.9) * b.height();
    const double x1 = b.x1 + rng.uniform(0.0, b.width() - w);
    const double y1 = b.y1 + rng.uniform(0.0, b.height() - h);
    return {x1, y1, x1 + w, y1 + h};
}

double max_gt_iou(const BBox& b, const std::vector<GtObject>& gt) {
    double best = 0.0;
    for (const auto& g : gt) best = std::max(best, iou(b, g.box));
    return best;
}

}  // namespace

void GenConfig::validate() const {
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (objects_min < 1 || objects_max < objects_min)
        throw ConfigError("objects range must satisfy 1 <= min <= max");
    if (proposals_per_scene < 1) throw ConfigError("proposals_per_scene must be >= 1");
    if (jitter_scale < 0.0) throw ConfigError("jitter_scale must be >= 0");
    if (part_fraction < 0.0 || part_fraction > 1.0 || background_fraction < 0.0 ||
        background_fraction > 1.0 || part_fraction + background_fraction > 1.0)
        throw ConfigError("part/background fractions must lie in [0,1] and sum to <= 1");
    if (feature_dim < num_classes) throw ConfigError("feature_dim must be >= num_classes");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
}

Mat class_prototypes(const GenConfig& cfg) {
    // Signed standard basis vectors under a seed-derived permutation. Rows
    // C and C+1 are the part-signature and background-texture directions
    // (each gets its own dimension when feature_dim allows).
    Rng rng = Rng::keyed(cfg.seed, 0, /*tag=*/1000);
    std::vector<int> perm(cfg.feature_dim);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = cfg.feature_dim - 1; i > 0; --i) {
        const long j = rng.uniform_int(0, i);
        std::swap(perm[i], perm[j]);
    }
    Mat protos(cfg.num_classes + 2, cfg.feature_dim);
    for (int c = 0; c < cfg.num_classes; ++c) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        protos.at(c, perm[c]) = sign;
    }
    if (cfg.feature_dim > cfg.num_classes) protos.at(cfg.num_classes, perm[cfg.num_classes]) = 1.0;
    if (cfg.feature_dim > cfg.num_classes + 1)
        protos.at(cfg.num_classes + 1, perm[cfg.num_classes + 1]) = 1.0;
    return protos;
}

void gen_proposals(Scene& scene, const GenConfig& cfg, Rng& rng) {
    CBL_CHECK(!scene.gt.empty(), "gen_proposals requires ground truth");
    const int total = cfg.proposals_per_scene;
    const int n_bg = static_cast<int>(std::lround(cfg.background_fraction * total));
    const int n_part = static_cast<int>(std::lround(cfg.part_fraction * total));
    const int n_jit = total - n_bg - n_part;
    const int n_gt = static_cast<int>(scene.gt.size());

    scene.proposals.clear();
    scene.kinds.clear();
    scene.parent.clear();
    scene.proposals.reserve(total);

    auto push = [&](const BBox& b, ProposalKind k, int par) {
        scene.proposals.push_back(b);
        scene.kinds.push_back(k);
        scene.parent.push_back(par);
    };

    for (int i = 0; i < n_jit; ++i) {
        const int g = static_cast<int>(rng.uniform_int(0, n_gt - 1));
        push(jitter_box(scene.gt[g].box, cfg.jitter_scale, rng), ProposalKind::kJitter, g);
    }
    for (int i = 0; i < n_part; ++i) {
        const int g = static_cast<int>(rng.uniform_int(0, n_gt - 1));
        push(part_box(scene.gt[g].box, rng), ProposalKind::kPart, g);
    }
    for (int i = 0; i < n_bg; ++i) {
        BBox best = sample_box(rng, 0.05, 0.3);
        double best_iou = max_gt_iou(best, scene.gt);
        for (int attempt = 0; attempt < kBackgroundRetries && best_iou >= 0.3; ++attempt) {
            const BBox cand = sample_box(rng, 0.05, 0.3);
            const double ci = max_gt_iou(cand, scene.gt);
            if (ci < best_iou) {
                best = cand;
                best_iou = ci;
            }
        }
        if (best_iou >= 0.3) scene.background_relaxed = true;
        push(best, ProposalKind::kBackground, -1);
    }

    // Coverage guarantee: every object gets at least one proposal with
    // IoU >= 0.5; overwrite slots from the back when a gap remains.
    int overwrite = total - 1;
    for (int g = 0; g < n_gt; ++g) {
        bool covered = false;
        for (const auto& p : scene.proposals)
            if (iou(p, scene.gt[g].box) >= 0.5) {
                covered = true;
                break;
            }
        if (covered) continue;
        BBox fix = scene.gt[g].box;
        for (int attempt = 0; attempt < 10; ++attempt) {
            const BBox cand = jitter_box(scene.gt[g].box, cfg.jitter_scale * 0.5, rng);
            if (iou(cand, scene.gt[g].box) >= 0.5) {
                fix = cand;
                break;
            }
        }
        CBL_CHECK(overwrite >= 0, "no slot left for coverage fix");
        scene.proposals[overwrite] = fix;
        scene.kinds[overwrite] = ProposalKind::kJitter;
        scene.parent[overwrite] = g;
        --overwrite;
    }
}

void featurize(Scene& scene, const GenConfig& cfg, Rng& rng) {
    CBL_CHECK(!scene.proposals.empty(), "featurize requires proposals");
    if (cfg.feature_dim < cfg.num_classes) throw ConfigError("feature_dim must be >= num_classes");

    const Mat protos = class_prototypes(cfg);
    const int n = static_cast<int>(scene.proposals.size());
    scene.features = Mat(cfg.feature_dim, n);

    for (int i = 0; i < n; ++i) {
        for (size_t g = 0; g < scene.gt.size(); ++g) {
            const double ov = iou(scene.proposals[i], scene.gt[g].box);
            if (ov == 0.0) continue;
            const double* proto = protos.row(scene.gt[g].cls);
            for (int d = 0; d < cfg.feature_dim; ++d)
                scene.features.at(d, i) += ov * proto[d];
        }
        if (scene.kinds[i] == ProposalKind::kPart) {
            const int par_cls = scene.gt[scene.parent[i]].cls;
            const double* proto = protos.row(par_cls);
            const double* sig = protos.row(cfg.num_classes);
            const bool own_sig_dim = cfg.feature_dim > cfg.num_classes;
            for (int d = 0; d < cfg.feature_dim; ++d) {
                scene.features.at(d, i) += kPartProtoBonus * proto[d];
                scene.features.at(d, i) += kPartSigBonus * (own_sig_dim ? sig[d] : proto[d]);
            }
        }
        if (scene.kinds[i] == ProposalKind::kBackground) {
            const double* sig = protos.row(cfg.num_classes + 1);
            for (int d = 0; d < cfg.feature_dim; ++d)
                scene.features.at(d, i) += kBackgroundSigBonus * sig[d];
        }
        if (cfg.noise_sigma > 0.0)
            for (int d = 0; d < cfg.feature_dim; ++d)
                scene.features.at(d, i) += rng.normal(0.0, cfg.noise_sigma);
    }
}

Scene gen_scene(const GenConfig& cfg, long scene_index) {
    cfg.validate();
    Rng rng = Rng::keyed(cfg.seed, static_cast<std::uint64_t>(scene_index));

    Scene scene;
    scene.id = scene_index;
    scene.y_img.assign(cfg.num_classes, 0);

    const int n_obj = static_cast<int>(rng.uniform_int(cfg.objects_min, cfg.objects_max));
    for (int i = 0; i < n_obj; ++i) {
        GtObject obj;
        obj.box = sample_box(rng, kMinObjectSize, kMaxObjectSize);
        obj.cls = static_cast<int>(rng.uniform_int(0, cfg.num_classes - 1));
        scene.y_img[obj.cls] = 1;
        scene.gt.push_back(obj);
    }

    gen_proposals(scene, cfg, rng);
    featurize(scene, cfg, rng);
    return scene;
}

std::vector<Scene> gen_dataset(const GenConfig& cfg, long count) {
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<size_t>(count));
    for (long i = 0; i < count; ++i) scenes.push_back(gen_scene(cfg, i));
    return scenes;
}

bool is_train_scene(const Scene& s) { return s.id % 2 == 0; }

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json box_to_json(const BBox& b) { return ordered_json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_json(const ordered_json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
            j.at(3).get<double>()};
}

}  // namespace

void write_scene_record(std::ostream& os, const Scene& s) {
    ordered_json j;
    j["id"] = s.id;
    j["gt"] = ordered_json::array();
    for (const auto& g : s.gt) j["gt"].push_back({{"box", box_to_json(g.box)}, {"cls", g.cls}});
    j["y_img"] = s.y_img;
    j["proposals"] = ordered_json::array();
    for (const auto& p : s.proposals) j["proposals"].push_back(box_to_json(p));
    j["features"] = {{"rows", s.features.rows}, {"cols", s.features.cols}, {"data", s.features.data}};
    j["kinds"] = ordered_json::array();
    for (auto k : s.kinds) j["kinds"].push_back(static_cast<int>(k));
    j["parent"] = s.parent;
    j["background_relaxed"] = s.background_relaxed;
    os << j.dump() << '\n';
}

void save_dataset(const std::vector<Scene>& scenes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    for (const auto& s : scenes) write_scene_record(out, s);
}

std::vector<Scene> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset: " + path);
    std::vector<Scene> scenes;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ConfigError("bad dataset record at line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        Scene s;
        s.id = j.at("id").get<long>();
        for (const auto& g : j.at("gt"))
            s.gt.push_back({box_from_json(g.at("box")), g.at("cls").get<int>()});
        s.y_img = j.at("y_img").get<std::vector<int>>();
        for (const auto& p : j.at("proposals")) s.proposals.push_back(box_from_json(p));
        const auto& f = j.at("features");
        s.features = Mat(f.at("rows").get<int>(), f.at("cols").get<int>());
        s.features.data = f.at("data").get<std::vector<double>>();
        CBL_CHECK(s.features.data.size() ==
                      static_cast<size_t>(s.features.rows) * s.features.cols,
                  "feature matrix size mismatch");
        for (const auto& k : j.at("kinds"))
            s.kinds.push_back(static_cast<ProposalKind>(k.get<int>()));
        s.parent = j.at("parent").get<std::vector<int>>();
        s.background_relaxed = j.at("background_relaxed").get<bool>();
        scenes.push_back(std::move(s));
    }
    return scenes;
}

}  // namespace cbl
