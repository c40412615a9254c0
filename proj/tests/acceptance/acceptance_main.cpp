// Acceptance suite: one pass/fail line per criterion.
//
//   1. formula checks reproduce closed-form values to 1e-9
//   2. analytic gradients pass central finite differences end to end
//   3. labeling algorithms match exhaustive brute-force references
//   4. teacher update algebra (coefficients, reductions, convergence rate)
//   5. desk-scale trend: the full pipeline beats the baseline arm
//   6. bit-exact determinism of training
//
// Exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cbl/checkpoint.hpp"
#include "cbl/eval.hpp"
#include "cbl/run_config.hpp"
#include "cbl/synth.hpp"
#include "cbl/trainer.hpp"

#include "../gradcheck_helpers.hpp"
#include "../oracles.hpp"

namespace {

struct Criterion {
    std::string name;
    long checks = 0;
    long failures = 0;
    double worst = 0.0;
    std::string first_failure;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit Criterion(std::string n) : name(std::move(n)) {}

    void expect_near(double got, double want, double tol, const std::string& what) {
        ++checks;
        const double err = std::abs(got - want);
        worst = std::max(worst, err);
        if (!(err <= tol)) record(what + ": got " + std::to_string(got) + ", want " +
                                 std::to_string(want));
    }

    void expect(bool ok, const std::string& what) {
        ++checks;
        if (!ok) record(what);
    }

    void record(const std::string& what) {
        ++failures;
        if (first_failure.empty()) first_failure = what;
    }

    bool report(const std::string& detail = "") const {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %s: %ld checks%s%s [%.2fs]\n", failures == 0 ? "PASS" : "FAIL",
                    name.c_str(), checks, detail.empty() ? "" : (", " + detail).c_str(),
                    failures ? (" | first failure: " + first_failure).c_str() : "", secs);
        std::fflush(stdout);
        return failures == 0;
    }
};

// ---------------------------------------------------------------- criterion 1

bool criterion_formulas() {
    Criterion c("criterion 1: formula suite (1e-9 absolute)");
    const double tol = 1e-9;

    // Box arithmetic.
    c.expect_near(cbl::iou({0, 0, 10, 10}, {0, 0, 10, 5}), 0.5, tol, "iou half overlap");
    c.expect_near(cbl::iou({0, 0, 1, 1}, {5, 5, 6, 6}), 0.0, tol, "iou disjoint");
    {
        const std::vector<cbl::BBox> dup = {{0, 0, 1, 1}, {0, 0, 1, 1}};
        const auto kept = cbl::nms(dup, {0.9, 0.8}, 0.5);
        c.expect(kept == std::vector<int>{0}, "nms keeps the higher duplicate");
    }

    // Softmax closed forms.
    {
        cbl::Mat col = cbl::Mat::from_rows({{0.0}, {std::log(3.0)}});
        const auto s = cbl::softmax_over_classes(col);
        c.expect_near(s.at(0, 0), 0.25, tol, "column softmax (0, ln3)");
        c.expect_near(s.at(1, 0), 0.75, tol, "column softmax (0, ln3)");
        cbl::Mat row = cbl::Mat::from_rows({{0.0, std::log(3.0)}});
        const auto r = cbl::softmax_over_proposals(row);
        c.expect_near(r.at(0, 0), 0.25, tol, "row softmax (0, ln3)");
        c.expect_near(r.at(0, 1), 0.75, tol, "row softmax (0, ln3)");
    }

    // Affine scalar cases.
    {
        cbl::AffineParams p(1, 1);
        p.weight.at(0, 0) = 2.0;
        p.bias = {1.0};
        c.expect_near(cbl::affine_forward(p, cbl::Mat(1, 1, 3.0)).at(0, 0), 7.0, tol,
                      "affine 2*3+1");
        const auto g = cbl::affine_backward(p, cbl::Mat(1, 1, 3.0), cbl::Mat(1, 1, 1.0));
        c.expect_near(g.weight.at(0, 0), 3.0, tol, "affine grad w");
        c.expect_near(g.bias[0], 1.0, tol, "affine grad b");
        c.expect_near(g.input.at(0, 0), 2.0, tol, "affine grad x");
    }

    // MIDN uniform product and BCE arithmetic.
    {
        const int cc = 4, n = 6;
        cbl::MidnParams p(3, 5, cc);
        cbl::Rng rng(2);
        for (auto& v : p.adapter.weight.data) v = rng.normal();
        cbl::Mat f(3, n);
        for (auto& v : f.data) v = rng.normal();
        const auto s = cbl::midn_forward(p, f);
        c.expect_near(s.x_midn.at(1, 2), 1.0 / (cc * n), tol, "uniform x_midn");
        c.expect_near(s.x_img[0], 1.0 / cc, tol, "uniform x_img");
    }
    c.expect_near(cbl::midn_loss({0.5, 1e-12, 1.0 - 1e-12}, {1, 0, 1}).value, std::log(2.0),
                  1e-9, "bce ln 2");

    // Refinement loss arithmetic.
    {
        cbl::Mat probs(2, 1);
        probs.at(0, 0) = 0.5;
        probs.at(1, 0) = 0.5;
        cbl::RefineLabels labels;
        labels.num_classes = 1;
        labels.label = {0};
        labels.weight = {1.0};
        c.expect_near(cbl::oic_loss(probs, labels).value, std::log(2.0), tol, "oic ln 2");
    }

    // Teacher update coefficients (alpha = 0.999, K = 3).
    {
        cbl::AffineParams t(1, 1), zero(1, 1), one(1, 1);
        one.weight.at(0, 0) = 1.0;
        cbl::wema_update(t, {&zero, &zero, &zero}, one, 0.999);
        c.expect_near(t.weight.at(0, 0), 0.0005, tol, "wema cls coefficient");
        cbl::AffineParams t2(1, 1);
        cbl::wema_update(t2, {&one, &zero, &zero}, zero, 0.999);
        c.expect_near(t2.weight.at(0, 0), 0.0005 / 3.0, tol, "wema oic coefficient");

        cbl::AffineParams t3(1, 1), o1(1, 1), o2(1, 1), o3(1, 1), cls(1, 1);
        o1.weight.at(0, 0) = 1.0;
        o2.weight.at(0, 0) = 2.0;
        o3.weight.at(0, 0) = 3.0;
        cls.weight.at(0, 0) = 10.0;
        cbl::wema_update(t3, {&o1, &o2, &o3}, cls, 0.0);
        c.expect_near(t3.weight.at(0, 0), 6.0, tol, "wema alpha 0 scalar");

        cbl::AffineParams t4(1, 1), a(1, 1), b(1, 1);
        a.weight.at(0, 0) = 2.0;
        b.weight.at(0, 0) = 4.0;
        cbl::aema_update(t4, {&a, &b}, 0.0);
        c.expect_near(t4.weight.at(0, 0), 3.0, tol, "aema mean");

        cbl::AffineParams t5(1, 1);
        t5.weight.at(0, 0) = 2.0;
        cbl::ema_update(t5, b, 0.5);  // teacher 2, student 4
        c.expect_near(t5.weight.at(0, 0), 3.0, tol, "ema midpoint");
    }

    // Distillation schedule endpoints (tau0 0.5, tau1 1.0).
    {
        cbl::CrdConfig crd;
        crd.iter_max = 80000;
        c.expect_near(cbl::tau_schedule(0, crd), 0.5, tol, "tau at 0");
        c.expect_near(cbl::tau_schedule(80000, crd), 1.0, tol, "tau at horizon");
        c.expect_near(cbl::tau_schedule(40000, crd), 0.75, tol, "tau midpoint");
    }

    // Weighted KL arithmetic.
    {
        cbl::Mat midn(1, 2, 0.3);
        cbl::Mat wet(1, 2);
        wet.at(0, 0) = 1.0;
        wet.at(0, 1) = 1.0 - std::log(3.0);
        const std::vector<cbl::BBox> boxes = {{0, 0, 1, 1}, {0, 0, 1, 0.95}};
        const auto ps = cbl::build_positive_set(wet, boxes, 0, 0.5);
        const double expect = 0.5 * (0.75 * std::log(1.5) + 0.25 * std::log(0.5));
        c.expect_near(cbl::crd_loss({ps}, midn, wet).value, expect, tol, "weighted KL");
    }

    // Seed search-range arithmetic.
    {
        cbl::Mat scores(1, 100);
        for (int i = 0; i < 100; ++i) scores.at(0, i) = static_cast<double>(i) / 100.0;
        c.expect(cbl::score_filter(scores, 0, 1e-9, 0.05).size() == 5, "top-5 of 100");

        cbl::Mat s2(1, 100, 0.1);
        s2.at(0, 0) = 0.9;
        s2.at(0, 1) = 0.631;
        s2.at(0, 2) = 0.629;
        const auto surv = cbl::score_filter(s2, 0, 0.7, 0.05);
        c.expect(surv == std::vector<int>{0, 1}, "threshold 0.63 at max 0.9");
    }

    // Seed confidence arithmetic.
    {
        cbl::Seed s;
        s.score = 0.8;
        s.agreement = 1.0;
        c.expect_near(s.score * (1.0 + std::pow(s.agreement, 0.4)), 1.6, tol, "w at p=1");
        // Independent route for 0.5^0.4: exp(-0.4 ln 2).
        c.expect_near(0.8 * (1.0 + std::pow(0.5, 0.4)),
                      0.8 * (1.0 + std::exp(-0.4 * std::log(2.0))), tol, "w at p=0.5");

        const std::vector<cbl::BBox> boxes = {{0, 0, 1, 1}};
        cbl::Mat src(1, 1, 0.9);
        std::vector<cbl::Seed> seeds = {{0, 0, 0.8, 0.0, 0.0}};
        cbl::seed_confidence(seeds, src, src, boxes, cbl::MsrConfig{});
        c.expect_near(seeds[0].confidence, 1.6, tol, "seed_confidence w=1.6");
    }

    // Box regression parameterization.
    {
        const cbl::BBox p(0.1, 0.2, 0.3, 0.6);
        const auto v0 = cbl::regression_targets(p, p);
        c.expect_near(v0[0] + v0[1] + v0[2] + v0[3], 0.0, tol, "identity targets");
        const auto v1 = cbl::regression_targets(p, {0.3, 0.2, 0.5, 0.6});
        c.expect_near(v1[0], 1.0, tol, "shift by width");
        const auto v2 = cbl::regression_targets(p, {0.0, 0.2, 0.4, 0.6});
        c.expect_near(v2[2], std::log(2.0), tol, "double width");
    }

    // Smooth-L1 and classification arithmetic.
    {
        cbl::RcnnLabels labels;
        labels.num_classes = 1;
        labels.label = {0, 1};
        labels.weight = {1.0, 0.0};
        labels.target = {{0, 0, 0, 0}, {0, 0, 0, 0}};
        cbl::Mat t(4, 2);
        t.at(0, 0) = 0.5;
        c.expect_near(cbl::rcnn_reg_loss(t, labels).value, 0.125 / 2.0, tol, "smooth-L1 0.5");
        t.at(0, 0) = 2.0;
        c.expect_near(cbl::rcnn_reg_loss(t, labels).value, 1.5 / 2.0, tol, "smooth-L1 2.0");

        cbl::Mat probs(2, 2, 0.5);
        c.expect_near(cbl::rcnn_cls_loss(probs, labels).value, std::log(2.0) / 2.0, tol,
                      "rcnn cls ln2/|R|");
        c.expect_near(cbl::rcnn_loss(1.25, 0.5), 1.75, tol, "rcnn additivity");
    }

    // Total-loss combination and the optimizer arithmetic.
    {
        cbl::LossParts parts;
        parts.midn = 1.0;
        parts.crd = 2.0;
        parts.oic = {3.0};
        parts.rcnn = 4.0;
        c.expect_near(cbl::total_loss(parts, 0.25), 8.75, tol, "weighted sum 8.75");
        c.expect_near(cbl::lambda_schedule(0, 100), 1.0, tol, "lambda at 0");
        c.expect_near(cbl::lambda_schedule(100, 100), 0.0, tol, "lambda at horizon");

        std::vector<double> p = {1.0}, g = {1.0}, v = {0.0};
        cbl::sgd_step(p, g, v, 0.1, 0.0, 0.0);
        c.expect_near(p[0], 0.9, tol, "sgd scalar step");
        p = {0.0};
        g = {1.0};
        v = {0.0};
        cbl::sgd_step(p, g, v, 0.1, 0.9, 0.0);
        cbl::sgd_step(p, g, v, 0.1, 0.9, 0.0);
        c.expect_near(v[0], 1.9, tol, "velocity recurrence");
    }

    // Inference-average arithmetic (K = 1).
    {
        cbl::Mat oic(2, 1, 0.0), cls(2, 1, 1.0), wet(2, 1, 0.5);
        c.expect_near(cbl::inference_scores({oic}, cls, wet).at(0, 0), 0.5, tol,
                      "two-step average");
    }

    std::ostringstream detail;
    detail << "max abs err " << c.worst;
    return c.report(detail.str());
}

// ---------------------------------------------------------------- criterion 2

bool criterion_gradients() {
    Criterion c("criterion 2: gradient suite (fd rel err < 1e-4)");
    cbl::Rng rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const int classes = static_cast<int>(rng.uniform_int(2, 4));
        const int proposals = static_cast<int>(rng.uniform_int(4, 12));
        const int k = static_cast<int>(rng.uniform_int(2, 3));
        const auto inst = gradcheck::make_instance(rng, classes, proposals, k);

        const struct {
            gradcheck::Loss loss;
            int head;
            const char* name;
        } cases[] = {{gradcheck::Loss::kMidn, 0, "L_midn"},
                     {gradcheck::Loss::kOic, 0, "L_oic[1]"},
                     {gradcheck::Loss::kOic, k - 1, "L_oic[K]"},
                     {gradcheck::Loss::kCrd, 0, "L_crd"},
                     {gradcheck::Loss::kRcnnCls, 0, "L_cls"},
                     {gradcheck::Loss::kRcnnReg, 0, "L_reg"}};
        for (const auto& cs : cases) {
            const double err = gradcheck::check(inst, cs.loss, 1e-4, cs.head);
            worst = std::max(worst, err);
            c.expect(err < 1e-4, std::string(cs.name) + " rel err " + std::to_string(err));
        }
    }
    std::ostringstream detail;
    detail << "20 instances, worst rel err " << worst;
    return c.report(detail.str());
}

// ---------------------------------------------------------------- criterion 3

bool criterion_oracles() {
    Criterion c("criterion 3: brute-force oracle suite (|R| <= 8)");
    cbl::Rng rng(77);

    for (int t = 0; t < 500; ++t) {
        const int n = static_cast<int>(rng.uniform_int(1, 8));
        const auto boxes = oracle::random_boxes(rng, n);

        // nms
        {
            std::vector<double> scores;
            for (int i = 0; i < n; ++i) scores.push_back(rng.uniform());
            const double thresh = rng.uniform(0.0, 1.0);
            c.expect(cbl::nms(boxes, scores, thresh) == oracle::nms_ref(boxes, scores, thresh),
                     "nms mismatch");
        }

        const int c_cnt = static_cast<int>(rng.uniform_int(1, 4));
        std::vector<int> y(c_cnt, 0);
        y[static_cast<size_t>(rng.uniform_int(0, c_cnt - 1))] = 1;
        for (auto& v : y) v = v || rng.uniform() < 0.4;

        // gen_refine_labels
        {
            cbl::Mat scores(c_cnt, n);
            for (auto& v : scores.data) v = rng.uniform();
            const auto got = cbl::gen_refine_labels(scores, y, boxes, 0.5);
            const auto ref = oracle::refine_labels_ref(scores, y, boxes, 0.5);
            c.expect(got.label == ref.label && got.weight == ref.weight,
                     "refine label mismatch");
        }

        // build_positive_set
        {
            cbl::Mat wet(c_cnt, n);
            for (auto& v : wet.data) v = rng.uniform();
            const int cls = static_cast<int>(rng.uniform_int(0, c_cnt - 1));
            const double tau = rng.uniform(0.0, 1.0);
            int anchor = 0;
            const auto members = oracle::positive_set_ref(wet, boxes, cls, tau, &anchor);
            const auto ps = cbl::build_positive_set(wet, boxes, cls, tau);
            c.expect(ps.anchor == anchor && ps.members == members, "positive set mismatch");
        }

        // mine_seeds over the ensemble scale
        {
            cbl::Mat msr(c_cnt, n);
            for (auto& v : msr.data) v = rng.uniform();
            const cbl::MsrConfig mcfg;
            const auto seeds = cbl::mine_seeds(msr, boxes, y, mcfg);
            const auto ref = oracle::mine_seeds_ref(msr, boxes, y, mcfg);
            bool same = seeds.size() == ref.size();
            for (size_t i = 0; same && i < seeds.size(); ++i)
                same = seeds[i].cls == ref[i].first && seeds[i].index == ref[i].second;
            c.expect(same, "mined seed mismatch");

            // gen_rcnn_labels from those seeds
            if (!seeds.empty()) {
                auto weighted = seeds;
                for (auto& s : weighted) s.confidence = s.score * (1.0 + rng.uniform());
                const auto got = cbl::gen_rcnn_labels(weighted, boxes, c_cnt);
                const auto ref_labels = oracle::rcnn_labels_ref(weighted, boxes, c_cnt);
                c.expect(got.label == ref_labels.label && got.weight == ref_labels.weight,
                         "rcnn label mismatch");
            }
        }
    }
    return c.report("500 random instances x 5 algorithms");
}

// ---------------------------------------------------------------- criterion 4

bool criterion_teacher_algebra() {
    Criterion c("criterion 4: teacher algebra suite");
    cbl::Rng rng(4);

    auto random_params = [&](int out, int in) {
        cbl::AffineParams p(out, in);
        for (auto& v : p.weight.data) v = rng.normal();
        for (auto& v : p.bias) v = rng.normal();
        return p;
    };

    // Coefficient-sum identity holds on every call (checked inside
    // wema_update); exercise it across alphas and K.
    for (double alpha : {0.0, 0.25, 0.5, 0.9, 0.999, 1.0}) {
        for (int k = 1; k <= 4; ++k) {
            std::vector<cbl::AffineParams> heads;
            for (int i = 0; i < k; ++i) heads.push_back(random_params(3, 2));
            std::vector<const cbl::AffineParams*> ptrs;
            for (auto& h : heads) ptrs.push_back(&h);
            auto teacher = random_params(3, 2);
            const auto cls = random_params(3, 2);
            bool threw = false;
            try {
                cbl::wema_update(teacher, ptrs, cls, alpha);
            } catch (...) {
                threw = true;
            }
            c.expect(!threw, "coefficient identity rejected");
        }
    }

    // All-equal reductions: W-EMA -> EMA and A-EMA -> EMA, exactly.
    for (int rep = 0; rep < 20; ++rep) {
        const auto common = random_params(4, 3);
        auto t1 = random_params(4, 3);
        auto t2 = t1;
        auto t3 = t1;
        const double alpha = rng.uniform();
        cbl::wema_update(t1, {&common, &common, &common}, common, alpha);
        cbl::aema_update(t2, {&common, &common, &common, &common}, alpha);
        cbl::ema_update(t3, common, alpha);
        double worst = 0.0;
        for (size_t i = 0; i < t1.weight.size(); ++i) {
            worst = std::max(worst, std::abs(t1.weight.data[i] - t3.weight.data[i]));
            worst = std::max(worst, std::abs(t2.weight.data[i] - t3.weight.data[i]));
        }
        c.expect_near(worst, 0.0, 1e-15, "all-equal reduction");
    }

    // Geometric convergence at rate alpha^N.
    for (double alpha : {0.5, 0.9, 0.99}) {
        const auto student = random_params(3, 3);
        auto teacher = random_params(3, 3);
        double d0 = 0.0;
        for (size_t i = 0; i < student.weight.size(); ++i)
            d0 = std::max(d0, std::abs(teacher.weight.data[i] - student.weight.data[i]));
        const int steps = 30;
        for (int i = 0; i < steps; ++i) cbl::ema_update(teacher, student, alpha);
        double dn = 0.0;
        for (size_t i = 0; i < student.weight.size(); ++i)
            dn = std::max(dn, std::abs(teacher.weight.data[i] - student.weight.data[i]));
        c.expect_near(dn, d0 * std::pow(alpha, steps), 1e-9, "geometric rate");
    }

    return c.report();
}

// ---------------------------------------------------------------- criterion 5

struct ArmResult {
    double map = 0.0;
    double macc75 = 0.0;
    long agree = 0;   // positive sets whose MIDN argmax matches the teacher's
    long sets = 0;
};

// Fraction of positive sets (tau = 0.5, train split) where the student's
// top member coincides with the teacher's.
void rank_agreement(const cbl::ModelParams& model, const cbl::WetParams& teacher,
                    const std::vector<cbl::Scene>& corpus, long* agree, long* sets) {
    *agree = 0;
    *sets = 0;
    for (const auto& scene : corpus) {
        if (!cbl::is_train_scene(scene)) continue;
        const auto fwd = cbl::midn_forward(model.midn, scene.features);
        const auto wet = cbl::wet_forward(teacher, scene.features);
        for (int c = 0; c < scene.num_classes(); ++c) {
            if (!scene.has_class(c)) continue;
            const auto ps = cbl::build_positive_set(wet.probs, scene.proposals, c, 0.5);
            if (ps.members.size() < 2) continue;
            int top_s = ps.members[0], top_t = ps.members[0];
            for (int j : ps.members) {
                if (fwd.x_midn.at(c, j) > fwd.x_midn.at(c, top_s)) top_s = j;
                if (wet.probs.at(c, j) > wet.probs.at(c, top_t)) top_t = j;
            }
            ++*sets;
            *agree += top_s == top_t;
        }
    }
}

ArmResult run_arm(const std::vector<cbl::Scene>& corpus, const std::string& preset,
                  std::uint64_t seed) {
    cbl::RunConfig cfg;
    cbl::apply_preset(cfg, preset);
    cfg.train.iterations = 6000;
    cfg.train.seed = seed;

    ArmResult arm;
    if (cfg.train.enable_wet) {
        // Snapshot mid-distillation (30% of the run, before tau closes in on
        // 1) for the in-set rank-agreement comparison.
        const std::string dir = "acc_trend_ckpt";
        std::filesystem::create_directories(dir);
        cfg.train.checkpoint_interval = 1800;
        const auto result = cbl::train(cfg.train, corpus, dir);
        const auto report = cbl::evaluate(result.model, &result.teacher, corpus, cfg.eval);
        arm.map = report.ap.map;
        arm.macc75 = report.macc75.mean;
        const auto mid = cbl::load_checkpoint(dir + "/checkpoint_1800.bin");
        rank_agreement(mid.model, mid.teacher, corpus, &arm.agree, &arm.sets);
        std::filesystem::remove_all(dir);
    } else {
        const auto result = cbl::train(cfg.train, corpus);
        const auto report = cbl::evaluate(result.model, nullptr, corpus, cfg.eval);
        arm.map = report.ap.map;
        arm.macc75 = report.macc75.mean;
    }
    return arm;
}

// The untrained starting point of the same run, for the before/after
// comparison of in-set rank agreement.
ArmResult initial_arm(const std::vector<cbl::Scene>& corpus, std::uint64_t seed) {
    cbl::TrainConfig cfg;
    cbl::Rng rng(seed);
    auto model = cbl::init_model(corpus.front().num_classes(), corpus.front().features.rows,
                                 cfg.hidden_dim, cfg.k_heads, rng);
    cbl::WetParams teacher;
    cbl::wet_init(teacher, model.midn.adapter, cbl::oic_head_ptrs(model), model.rcnn.cls,
                  cfg.ema);
    ArmResult arm;
    rank_agreement(model, teacher, corpus, &arm.agree, &arm.sets);
    return arm;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

bool criterion_trend() {
    Criterion c("criterion 5: desk-scale trend (cbl vs baseline, 5 seeds)");

    std::vector<double> base_map, cbl_map, base_macc, cbl_macc;
    int positive_gaps = 0;
    long agree_before = 0, sets_before = 0, agree_after = 0, sets_after = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cbl::GenConfig gen;
        gen.num_classes = 5;
        gen.proposals_per_scene = 60;
        gen.seed = seed;
        const auto corpus = cbl::gen_dataset(gen, 600);  // 300 train / 300 test

        const ArmResult base = run_arm(corpus, "baseline", seed);
        const ArmResult full = run_arm(corpus, "cbl", seed);
        const ArmResult init = initial_arm(corpus, seed);
        base_map.push_back(base.map);
        cbl_map.push_back(full.map);
        base_macc.push_back(base.macc75);
        cbl_macc.push_back(full.macc75);
        if (full.macc75 > base.macc75) ++positive_gaps;
        agree_before += init.agree;
        sets_before += init.sets;
        agree_after += full.agree;
        sets_after += full.sets;
        std::printf("    seed %llu: mAP %.4f -> %.4f, mAcc@0.75 %.4f -> %.4f\n",
                    static_cast<unsigned long long>(seed), base.map, full.map, base.macc75,
                    full.macc75);
        std::fflush(stdout);
    }

    const double bm = median(base_map), cm = median(cbl_map);
    const double ba = median(base_macc), ca = median(cbl_macc);
    c.expect(cm >= bm, "median mAP regressed: " + std::to_string(cm) + " < " +
                           std::to_string(bm));
    c.expect(ca >= ba, "median mAcc@0.75 regressed");
    c.expect(positive_gaps >= 3, "mAcc gap positive in only " +
                                     std::to_string(positive_gaps) + " of 5 seeds");

    // Informational: student/teacher top-member agreement inside the positive
    // sets, before training vs mid-distillation. Among near-duplicate set
    // members the teacher's own micro-ordering is noise-driven, so this
    // fluctuates around chance; the gated localization analogue is mAcc@1.
    const double fa_before = static_cast<double>(agree_before) / std::max(sets_before, 1L);
    const double fa_after = static_cast<double>(agree_after) / std::max(sets_after, 1L);

    std::ostringstream detail;
    detail << "median mAP " << bm << " -> " << cm << ", median mAcc@0.75 " << ba << " -> " << ca
           << ", positive gaps " << positive_gaps << "/5, in-set agreement (info) " << fa_before
           << " -> " << fa_after;
    return c.report(detail.str());
}

// ---------------------------------------------------------------- criterion 6

bool criterion_determinism() {
    Criterion c("criterion 6: determinism");

    cbl::GenConfig gen;
    gen.num_classes = 4;
    gen.proposals_per_scene = 30;
    gen.seed = 9;
    const auto corpus_a = cbl::gen_dataset(gen, 60);
    const auto corpus_b = cbl::gen_dataset(gen, 60);

    {
        std::ostringstream a, b;
        for (const auto& s : corpus_a) cbl::write_scene_record(a, s);
        for (const auto& s : corpus_b) cbl::write_scene_record(b, s);
        c.expect(a.str() == b.str(), "dataset snapshots differ");
    }

    for (const std::string preset : {"baseline", "cbl", "a-ema", "ema-last-oic"}) {
        cbl::RunConfig cfg;
        cbl::apply_preset(cfg, preset);
        cfg.train.iterations = 120;
        cfg.train.log_interval = 10;

        const auto r1 = cbl::train(cfg.train, corpus_a);
        const auto r2 = cbl::train(cfg.train, corpus_a);

        bool same_history = r1.history.size() == r2.history.size();
        for (size_t i = 0; same_history && i < r1.history.size(); ++i)
            same_history = r1.history[i].total == r2.history[i].total &&
                           r1.history[i].midn == r2.history[i].midn &&
                           r1.history[i].crd == r2.history[i].crd &&
                           r1.history[i].rcnn == r2.history[i].rcnn;
        c.expect(same_history, preset + ": histories differ");

        const std::string pa = "acc_det_a.bin", pb = "acc_det_b.bin";
        cbl::save_checkpoint(pa, cbl::to_checkpoint(r1, cfg.train.enable_wet));
        cbl::save_checkpoint(pb, cbl::to_checkpoint(r2, cfg.train.enable_wet));
        std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
        std::ostringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        c.expect(sa.str() == sb.str(), preset + ": checkpoints differ");
        std::remove(pa.c_str());
        std::remove(pb.c_str());
    }
    return c.report();
}

}  // namespace

int main() {
    int failures = 0;
    failures += !criterion_formulas();
    failures += !criterion_gradients();
    failures += !criterion_oracles();
    failures += !criterion_teacher_algebra();
    failures += !criterion_trend();
    failures += !criterion_determinism();
    std::printf("%s: %d of 6 criteria failed\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                failures);
    return failures;
}
