#include <benchmark/benchmark.h>

#include "cbl/eval.hpp"
#include "cbl/model.hpp"
#include "cbl/synth.hpp"
#include "cbl/trainer.hpp"

namespace {

std::vector<cbl::BBox> bench_boxes(int n, std::uint64_t seed) {
    cbl::Rng rng(seed);
    std::vector<cbl::BBox> boxes;
    boxes.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.uniform(0.0, 0.8);
        const double y1 = rng.uniform(0.0, 0.8);
        boxes.emplace_back(x1, y1, x1 + rng.uniform(0.05, 0.19), y1 + rng.uniform(0.05, 0.19));
    }
    return boxes;
}

void BM_Iou(benchmark::State& state) {
    const auto boxes = bench_boxes(2, 1);
    for (auto _ : state) benchmark::DoNotOptimize(cbl::iou(boxes[0], boxes[1]));
}
BENCHMARK(BM_Iou);

void BM_Nms(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto boxes = bench_boxes(n, 2);
    cbl::Rng rng(3);
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) scores.push_back(rng.uniform());
    for (auto _ : state) benchmark::DoNotOptimize(cbl::nms(boxes, scores, 0.3));
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Nms)->Arg(60)->Arg(250)->Arg(1000);

void BM_GenScene(benchmark::State& state) {
    cbl::GenConfig cfg;
    long index = 0;
    for (auto _ : state) benchmark::DoNotOptimize(cbl::gen_scene(cfg, index++));
}
BENCHMARK(BM_GenScene);

void BM_MidnForward(benchmark::State& state) {
    cbl::GenConfig cfg;
    const auto scene = cbl::gen_scene(cfg, 0);
    cbl::Rng rng(4);
    const auto model =
        cbl::init_model(cfg.num_classes, cfg.feature_dim, 32, 3, rng);
    for (auto _ : state) benchmark::DoNotOptimize(cbl::midn_forward(model.midn, scene.features));
}
BENCHMARK(BM_MidnForward);

void BM_ScenePass(benchmark::State& state) {
    cbl::GenConfig cfg;
    const auto scene = cbl::gen_scene(cfg, 0);
    cbl::Rng rng(5);
    auto model = cbl::init_model(cfg.num_classes, cfg.feature_dim, 32, 3, rng);
    cbl::TrainConfig tc;
    cbl::WetParams teacher;
    cbl::wet_init(teacher, model.midn.adapter, cbl::oic_head_ptrs(model), model.rcnn.cls,
                  tc.ema);
    auto grads = model.zeros_like();
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            cbl::scene_pass(model, &teacher, scene, 0.5, 0.6, true, tc, &grads));
    }
}
BENCHMARK(BM_ScenePass);

void BM_Evaluate(benchmark::State& state) {
    cbl::GenConfig cfg;
    const auto corpus = cbl::gen_dataset(cfg, 40);
    cbl::Rng rng(6);
    const auto model = cbl::init_model(cfg.num_classes, cfg.feature_dim, 32, 3, rng);
    cbl::WetParams teacher;
    cbl::TrainConfig tc;
    cbl::wet_init(teacher, model.midn.adapter, cbl::oic_head_ptrs(model), model.rcnn.cls,
                  tc.ema);
    cbl::EvalOptions opts;
    for (auto _ : state) benchmark::DoNotOptimize(cbl::evaluate(model, &teacher, corpus, opts));
}
BENCHMARK(BM_Evaluate);

}  // namespace

BENCHMARK_MAIN();
