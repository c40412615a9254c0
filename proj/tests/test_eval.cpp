#include <doctest.h>

#include <cmath>

#include "cbl/eval.hpp"
#include "cbl/rng.hpp"

#include "oracles.hpp"

using cbl::BBox;
using cbl::Detection;
using cbl::Mat;
using cbl::Scene;

namespace {

Scene fixture_scene(long id, const std::vector<std::pair<BBox, int>>& gt,
                    const std::vector<BBox>& proposals, int num_classes) {
    Scene s;
    s.id = id;
    s.y_img.assign(num_classes, 0);
    for (const auto& [box, cls] : gt) {
        s.gt.push_back({box, cls});
        s.y_img[cls] = 1;
    }
    s.proposals = proposals;
    s.kinds.assign(proposals.size(), cbl::ProposalKind::kJitter);
    s.parent.assign(proposals.size(), -1);
    s.features = Mat(1, static_cast<int>(proposals.size()));
    return s;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("weighted two-step inference average") {
    SUBCASE("all heads equal") {
        Mat s(3, 2, 0.4);
        CHECK(cbl::inference_scores({s, s}, s, s).data == s.data);
    }
    SUBCASE("K=1 arithmetic: 0.5*(0.5*(0+1)+0.5) = 0.5") {
        Mat oic(2, 1, 0.0), cls(2, 1, 1.0), wet(2, 1, 0.5);
        const Mat out = cbl::inference_scores({oic}, cls, wet);
        CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("permutation-invariant over the OIC inputs") {
        cbl::Rng rng(1);
        Mat a(2, 3), b(2, 3), c(2, 3), cls(2, 3), wet(2, 3);
        for (auto* m : {&a, &b, &c, &cls, &wet})
            for (auto& v : m->data) v = rng.uniform();
        const Mat o1 = cbl::inference_scores({a, b, c}, cls, wet);
        const Mat o2 = cbl::inference_scores({c, a, b}, cls, wet);
        for (size_t i = 0; i < o1.size(); ++i)
            CHECK(o1.data[i] == doctest::Approx(o2.data[i]).epsilon(1e-15));
    }
    SUBCASE("shape mismatch") {
        Mat a(2, 3), wet(3, 3);
        CHECK_THROWS_AS(cbl::inference_scores({a}, a, wet), std::invalid_argument);
    }
}

TEST_CASE("decode and detect") {
    const std::vector<BBox> proposals = {BBox(0.2, 0.2, 0.4, 0.4), BBox(0.6, 0.6, 0.8, 0.8)};
    Mat x_inf(2, 2);  // one class + background
    x_inf.at(0, 0) = 0.9;
    x_inf.at(0, 1) = 0.8;

    SUBCASE("zero deltas return the proposals") {
        Mat reg(4, 2);
        const auto dets = cbl::decode_and_detect(x_inf, reg, proposals, 7, 0.3, 1e-3);
        REQUIRE(dets.size() == 2);
        CHECK(dets[0].box.x1 == doctest::Approx(proposals[0].x1).epsilon(1e-12));
        CHECK(dets[0].box.y1 == doctest::Approx(proposals[0].y1).epsilon(1e-12));
        CHECK(dets[0].box.x2 == doctest::Approx(proposals[0].x2).epsilon(1e-12));
        CHECK(dets[0].box.y2 == doctest::Approx(proposals[0].y2).epsilon(1e-12));
        CHECK(dets[0].score == 0.9);
        CHECK(dets[0].scene_id == 7);
        CHECK(dets[1].box.x1 == doctest::Approx(proposals[1].x1).epsilon(1e-12));
    }
    SUBCASE("width delta ln 2 doubles the width about the center") {
        Mat reg(4, 2);
        reg.at(2, 0) = std::log(2.0);
        const auto dets = cbl::decode_and_detect(x_inf, reg, proposals, 0, 0.3, 1e-3);
        CHECK(dets[0].box.x1 == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(dets[0].box.x2 == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(dets[0].box.y1 == doctest::Approx(0.2).epsilon(1e-12));
    }
    SUBCASE("duplicate decoded boxes collapse under NMS") {
        const std::vector<BBox> dup = {BBox(0.2, 0.2, 0.4, 0.4), BBox(0.2, 0.2, 0.4, 0.4)};
        Mat reg(4, 2);
        const auto dets = cbl::decode_and_detect(x_inf, reg, dup, 0, 0.3, 1e-3);
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].score == 0.9);
    }
    SUBCASE("score floor filters detections") {
        Mat reg(4, 2);
        Mat low = x_inf;
        low.at(0, 1) = 1e-4;
        const auto dets = cbl::decode_and_detect(low, reg, proposals, 0, 0.3, 1e-3);
        REQUIRE(dets.size() == 1);
    }
}

TEST_CASE("mean top-1 accuracy") {
    const BBox obj(0.1, 0.1, 0.5, 0.5);
    const BBox near_obj(0.1, 0.1, 0.5, 0.48);   // IoU 0.96
    const BBox off_obj(0.3, 0.3, 0.7, 0.7);     // IoU ~0.14
    const Scene s0 = fixture_scene(0, {{obj, 0}}, {near_obj, off_obj}, 2);
    const Scene s1 = fixture_scene(2, {{obj, 0}, {obj, 1}}, {near_obj, off_obj}, 2);
    const std::vector<const Scene*> scenes = {&s0, &s1};

    SUBCASE("always right / always wrong") {
        Mat hit(2, 2);
        hit.at(0, 0) = 1.0;
        hit.at(1, 0) = 1.0;
        const auto perfect = cbl::macc_at_1({hit, hit}, scenes, 0.75);
        CHECK(perfect.mean == doctest::Approx(1.0).epsilon(1e-12));

        Mat miss(2, 2);
        miss.at(0, 1) = 1.0;
        miss.at(1, 1) = 1.0;
        const auto zero = cbl::macc_at_1({miss, miss}, scenes, 0.75);
        CHECK(zero.mean == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("hand-counted mixed fixture") {
        // Class 0 hits in scene 0, misses in scene 2 -> 1/2.
        // Class 1 (only scene 2) hits -> 1. Mean = 0.75.
        Mat t0(2, 2), t1(2, 2);
        t0.at(0, 0) = 1.0;
        t1.at(0, 1) = 1.0;
        t1.at(1, 0) = 1.0;
        const auto res = cbl::macc_at_1({t0, t1}, scenes, 0.75);
        CHECK(res.per_class[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(res.per_class[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(res.mean == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("absent class is excluded with a note") {
        const Scene only0 = fixture_scene(0, {{obj, 0}}, {near_obj}, 3);
        Mat t(3, 1);
        t.at(0, 0) = 1.0;
        const auto res = cbl::macc_at_1({t}, {&only0}, 0.75);
        CHECK(res.excluded == std::vector<int>{1, 2});
        CHECK(res.mean == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("stricter thresholds never help") {
        cbl::Rng rng(4);
        cbl::GenConfig gcfg;
        const auto corpus = cbl::gen_dataset(gcfg, 20);
        std::vector<const Scene*> ptrs;
        std::vector<Mat> tables;
        for (const auto& sc : corpus) {
            ptrs.push_back(&sc);
            Mat t(gcfg.num_classes, static_cast<int>(sc.proposals.size()));
            for (auto& v : t.data) v = rng.uniform();
            tables.push_back(t);
        }
        const auto loose = cbl::macc_at_1(tables, ptrs, 0.75);
        const auto strict = cbl::macc_at_1(tables, ptrs, 0.85);
        CHECK(strict.mean <= loose.mean + 1e-12);
    }
}

TEST_CASE("correct localization rate") {
    const BBox obj(0.1, 0.1, 0.5, 0.5);
    const BBox good(0.1, 0.1, 0.5, 0.45);  // IoU ~0.89
    const BBox bad(0.6, 0.6, 0.9, 0.9);
    const Scene s0 = fixture_scene(0, {{obj, 0}}, {good, bad}, 2);
    const Scene s1 = fixture_scene(2, {{obj, 0}, {obj, 1}}, {good, bad}, 2);
    const Scene s2 = fixture_scene(4, {{obj, 1}}, {good, bad}, 2);
    const std::vector<const Scene*> scenes = {&s0, &s1, &s2};
    // Pairs: (0,c0), (2,c0), (2,c1), (4,c1) -> 4 total.

    SUBCASE("perfect and zero localizers") {
        std::vector<Detection> perfect = {{0, 0, good, 0.9},
                                          {2, 0, good, 0.9},
                                          {2, 1, good, 0.9},
                                          {4, 1, good, 0.9}};
        CHECK(cbl::corloc(perfect, scenes) == doctest::Approx(100.0).epsilon(1e-12));
        std::vector<Detection> zero = {{0, 0, bad, 0.9},
                                       {2, 0, bad, 0.9},
                                       {2, 1, bad, 0.9},
                                       {4, 1, bad, 0.9}};
        CHECK(cbl::corloc(zero, scenes) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("3 of 4 pairs correct is 75%") {
        std::vector<Detection> dets = {{0, 0, good, 0.9},
                                       {2, 0, good, 0.9},
                                       {2, 1, good, 0.9},
                                       {4, 1, bad, 0.9}};
        CHECK(cbl::corloc(dets, scenes) == doctest::Approx(75.0).epsilon(1e-12));
    }
}

TEST_CASE("average precision") {
    const BBox obj(0.1, 0.1, 0.5, 0.5);
    const BBox good(0.1, 0.1, 0.5, 0.45);
    const BBox bad(0.6, 0.6, 0.9, 0.9);
    const Scene s = fixture_scene(1, {{obj, 0}}, {good, bad}, 1);
    const std::vector<const Scene*> scenes = {&s};

    SUBCASE("single correct detection") {
        const std::vector<Detection> dets = {{1, 0, good, 0.9}};
        const auto res = cbl::average_precision(dets, scenes, 1, 0.5);
        CHECK(res.per_class[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(res.map == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("one wrong above one right gives 0.5") {
        const std::vector<Detection> dets = {{1, 0, bad, 0.9}, {1, 0, good, 0.8}};
        const auto res = cbl::average_precision(dets, scenes, 1, 0.5);
        CHECK(res.map == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("no detections scores zero") {
        const auto res = cbl::average_precision({}, scenes, 1, 0.5);
        CHECK(res.map == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("duplicate hits on one object count once") {
        const std::vector<Detection> dets = {{1, 0, good, 0.9}, {1, 0, good, 0.8}};
        const auto res = cbl::average_precision(dets, scenes, 1, 0.5);
        CHECK(res.map == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("monotone score transforms leave AP unchanged") {
        cbl::Rng rng(5);
        const Scene s2 = fixture_scene(3, {{obj, 0}, {BBox(0.55, 0.55, 0.9, 0.9), 0}},
                                       {good, bad}, 1);
        const std::vector<const Scene*> both = {&s, &s2};
        std::vector<Detection> dets;
        for (long id : {1L, 3L})
            for (const auto& b : {good, bad, BBox(0.56, 0.55, 0.9, 0.9)})
                dets.push_back({id, 0, b, rng.uniform()});
        const auto base = cbl::average_precision(dets, both, 1, 0.5);
        for (auto& d : dets) d.score = std::exp(5.0 * d.score) + 2.0;
        const auto warped = cbl::average_precision(dets, both, 1, 0.5);
        CHECK(base.map == doctest::Approx(warped.map).epsilon(1e-12));
    }
    SUBCASE("class without ground truth is excluded") {
        const auto res = cbl::average_precision({}, scenes, 2, 0.5);
        CHECK(res.excluded == std::vector<int>{1});
    }
}

TEST_CASE("evaluate requires a teacher for teacher-backed sources") {
    cbl::GenConfig gcfg;
    gcfg.num_classes = 2;
    gcfg.feature_dim = 4;
    gcfg.proposals_per_scene = 10;
    const auto corpus = cbl::gen_dataset(gcfg, 6);
    cbl::Rng rng(1);
    const auto model = cbl::init_model(2, 4, 8, 2, rng);

    cbl::EvalOptions opts;
    opts.source = cbl::ScoreSource::kWeighted;
    CHECK_THROWS_AS(cbl::evaluate(model, nullptr, corpus, opts), cbl::ConfigError);

    opts.source = cbl::ScoreSource::kBasic;
    const auto rep = cbl::evaluate(model, nullptr, corpus, opts);
    CHECK(rep.train_scenes == 3);
    CHECK(rep.test_scenes == 3);
}

}  // TEST_SUITE
