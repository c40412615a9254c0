#include "cbl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cbl/msr.hpp"

namespace cbl {

ScoreSource score_source_from_string(const std::string& s) {
    if (s == "basic") return ScoreSource::kBasic;
    if (s == "average") return ScoreSource::kAverage;
    if (s == "weighted") return ScoreSource::kWeighted;
    if (s == "wet-only") return ScoreSource::kWetOnly;
    if (s == "wet-head") return ScoreSource::kWetHead;
    throw ConfigError("unknown score source: " + s);
}

std::string to_string(ScoreSource s) {
    switch (s) {
        case ScoreSource::kBasic: return "basic";
        case ScoreSource::kAverage: return "average";
        case ScoreSource::kWeighted: return "weighted";
        case ScoreSource::kWetOnly: return "wet-only";
        case ScoreSource::kWetHead: return "wet-head";
    }
    return "?";
}

namespace {

Mat mat_mean(const std::vector<const Mat*>& mats) {
    CBL_CHECK(!mats.empty(), "mean of zero matrices");
    Mat out(mats.front()->rows, mats.front()->cols);
    for (const Mat* m : mats) {
        CBL_CHECK(m->same_shape(out), "shape mismatch in score average");
        for (size_t i = 0; i < out.size(); ++i) out.data[i] += m->data[i];
    }
    const double inv = 1.0 / static_cast<double>(mats.size());
    for (auto& v : out.data) v *= inv;
    return out;
}

}  // namespace

Mat inference_scores(const std::vector<Mat>& oic_outputs, const Mat& cls_output,
                     const Mat& wet_output) {
    std::vector<const Mat*> basic;
    for (const auto& m : oic_outputs) basic.push_back(&m);
    basic.push_back(&cls_output);
    const Mat first = mat_mean(basic);
    return mat_mean({&first, &wet_output});
}

std::vector<Detection> decode_and_detect(const Mat& x_inf, const Mat& reg_out,
                                         const std::vector<BBox>& proposals, long scene_id,
                                         double nms_thresh, double score_floor) {
    const int n = static_cast<int>(proposals.size());
    CBL_CHECK(x_inf.cols == n && reg_out.cols == n, "scores/proposals length mismatch");
    const int num_classes = reg_out.rows / 4;
    CBL_CHECK(reg_out.rows == 4 * num_classes && x_inf.rows >= num_classes,
              "regression rows must be 4C");

    std::vector<Detection> out;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<BBox> boxes;
        std::vector<double> scores;
        for (int i = 0; i < n; ++i) {
            const double score = x_inf.at(c, i);
            if (score <= score_floor) continue;
            BBox decoded = decode_regression(
                proposals[i], {reg_out.at(4 * c, i), reg_out.at(4 * c + 1, i),
                               reg_out.at(4 * c + 2, i), reg_out.at(4 * c + 3, i)});
            const double x1 = std::clamp(decoded.x1, 0.0, 1.0);
            const double y1 = std::clamp(decoded.y1, 0.0, 1.0);
            const double x2 = std::clamp(decoded.x2, 0.0, 1.0);
            const double y2 = std::clamp(decoded.y2, 0.0, 1.0);
            if (x2 <= x1 || y2 <= y1) continue;
            boxes.emplace_back(x1, y1, x2, y2);
            scores.push_back(score);
        }
        for (int k : nms(boxes, scores, nms_thresh))
            out.push_back({scene_id, c, boxes[k], scores[k]});
    }
    return out;
}

MaccResult macc_at_1(const std::vector<Mat>& x_midn_per_scene,
                     const std::vector<const Scene*>& scenes, double iou_thresh) {
    CBL_CHECK(x_midn_per_scene.size() == scenes.size(), "scores/scenes length mismatch");
    CBL_CHECK(!scenes.empty(), "macc over empty scene list");
    const int num_classes = scenes.front()->num_classes();

    std::vector<long> hits(num_classes, 0), total(num_classes, 0);
    for (size_t s = 0; s < scenes.size(); ++s) {
        const Scene& scene = *scenes[s];
        const Mat& x = x_midn_per_scene[s];
        for (int c = 0; c < num_classes; ++c) {
            if (!scene.has_class(c)) continue;
            int top = 0;
            for (int i = 1; i < x.cols; ++i)
                if (x.at(c, i) > x.at(c, top)) top = i;
            double best = 0.0;
            for (const auto& g : scene.gt)
                if (g.cls == c) best = std::max(best, iou(scene.proposals[top], g.box));
            ++total[c];
            if (best > iou_thresh) ++hits[c];
        }
    }

    MaccResult res;
    res.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
    res.occurrences = total;
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (total[c] == 0) {
            res.excluded.push_back(c);
            continue;
        }
        res.per_class[c] = static_cast<double>(hits[c]) / static_cast<double>(total[c]);
        sum += res.per_class[c];
        ++counted;
    }
    res.mean = counted > 0 ? sum / counted : 0.0;
    return res;
}

double corloc(const std::vector<Detection>& top1, const std::vector<const Scene*>& scenes) {
    long pairs = 0;
    for (const auto* s : scenes)
        for (int c = 0; c < s->num_classes(); ++c)
            if (s->has_class(c)) ++pairs;
    if (pairs == 0) return 0.0;

    long correct = 0;
    for (const auto& d : top1) {
        const Scene* scene = nullptr;
        for (const auto* s : scenes)
            if (s->id == d.scene_id) {
                scene = s;
                break;
            }
        CBL_CHECK(scene != nullptr, "detection references unknown scene");
        for (const auto& g : scene->gt)
            if (g.cls == d.cls && iou(d.box, g.box) > 0.5) {
                ++correct;
                break;
            }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(pairs);
}

ApResult average_precision(const std::vector<Detection>& detections,
                           const std::vector<const Scene*>& scenes, int num_classes,
                           double iou_thresh) {
    ApResult res;
    res.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());

    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        long num_gt = 0;
        for (const auto* s : scenes)
            for (const auto& g : s->gt)
                if (g.cls == c) ++num_gt;
        if (num_gt == 0) {
            res.excluded.push_back(c);
            continue;
        }

        std::vector<const Detection*> dets;
        for (const auto& d : detections)
            if (d.cls == c) dets.push_back(&d);
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection* a, const Detection* b) { return a->score > b->score; });

        // matched[scene][gt index within that scene's class-c objects]
        std::vector<std::vector<bool>> matched(scenes.size());
        std::vector<std::vector<const GtObject*>> gt_of(scenes.size());
        for (size_t s = 0; s < scenes.size(); ++s) {
            for (const auto& g : scenes[s]->gt)
                if (g.cls == c) gt_of[s].push_back(&g);
            matched[s].assign(gt_of[s].size(), false);
        }

        std::vector<double> precision, recall;
        long tp = 0, fp = 0;
        for (const auto* d : dets) {
            size_t scene_idx = scenes.size();
            for (size_t s = 0; s < scenes.size(); ++s)
                if (scenes[s]->id == d->scene_id) {
                    scene_idx = s;
                    break;
                }
            CBL_CHECK(scene_idx < scenes.size(), "detection references unknown scene");

            double best = 0.0;
            int best_g = -1;
            for (size_t g = 0; g < gt_of[scene_idx].size(); ++g) {
                const double ov = iou(d->box, gt_of[scene_idx][g]->box);
                if (ov > best) {
                    best = ov;
                    best_g = static_cast<int>(g);
                }
            }
            if (best > iou_thresh && best_g >= 0 && !matched[scene_idx][best_g]) {
                matched[scene_idx][best_g] = true;
                ++tp;
            } else {
                ++fp;
            }
            precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
            recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
        }

        // All-point interpolation: running max of precision from the right,
        // integrated over recall steps.
        double ap = 0.0;
        double prev_recall = 0.0;
        for (size_t i = 0; i < precision.size(); ++i) {
            double pmax = precision[i];
            for (size_t j = i + 1; j < precision.size(); ++j) pmax = std::max(pmax, precision[j]);
            if (recall[i] > prev_recall) {
                ap += (recall[i] - prev_recall) * pmax;
                prev_recall = recall[i];
            }
        }
        res.per_class[c] = ap;
        sum += ap;
        ++counted;
    }
    res.map = counted > 0 ? sum / counted : 0.0;
    return res;
}

EvalReport evaluate(const ModelParams& model, const WetParams* teacher,
                    const std::vector<Scene>& dataset, const EvalOptions& opts) {
    const bool needs_teacher = opts.source != ScoreSource::kBasic;
    if (needs_teacher && teacher == nullptr)
        throw ConfigError("score source '" + to_string(opts.source) +
                          "' requires a teacher in the checkpoint");

    std::vector<const Scene*> train_split, test_split;
    for (const auto& s : dataset)
        (is_train_scene(s) ? train_split : test_split).push_back(&s);

    std::vector<Mat> train_midn;
    std::vector<Detection> test_detections;
    std::vector<Detection> train_top1;

    auto scene_scores = [&](const Scene& scene, Mat& x_inf, Mat& reg_out, Mat& x_midn) {
        const MidnScores fwd = midn_forward(model.midn, scene.features);
        x_midn = fwd.x_midn;
        std::vector<Mat> oic_probs(model.k_heads());
        for (int k = 0; k < model.k_heads(); ++k)
            oic_probs[k] = oic_forward(model.oic, k, fwd.hidden);
        const Mat cls_probs = softmax_over_classes(affine_forward(model.rcnn.cls, fwd.hidden));
        reg_out = affine_forward(model.rcnn.reg, fwd.hidden);

        switch (opts.source) {
            case ScoreSource::kBasic: {
                std::vector<const Mat*> parts;
                for (const auto& m : oic_probs) parts.push_back(&m);
                parts.push_back(&cls_probs);
                x_inf = mat_mean(parts);
                break;
            }
            case ScoreSource::kAverage: {
                const Mat wet = wet_forward(*teacher, scene.features).probs;
                std::vector<const Mat*> parts;
                for (const auto& m : oic_probs) parts.push_back(&m);
                parts.push_back(&cls_probs);
                parts.push_back(&wet);
                x_inf = mat_mean(parts);
                break;
            }
            case ScoreSource::kWeighted: {
                const Mat wet = wet_forward(*teacher, scene.features).probs;
                x_inf = inference_scores(oic_probs, cls_probs, wet);
                break;
            }
            case ScoreSource::kWetOnly:
                x_inf = wet_forward(*teacher, scene.features).probs;
                break;
            case ScoreSource::kWetHead: {
                // Teacher head on the student's trunk features.
                const Mat wet = softmax_over_classes(affine_forward(teacher->cls, fwd.hidden));
                x_inf = inference_scores(oic_probs, cls_probs, wet);
                break;
            }
        }
    };

    for (const auto* scene : test_split) {
        Mat x_inf, reg_out, x_midn;
        scene_scores(*scene, x_inf, reg_out, x_midn);
        auto dets = decode_and_detect(x_inf, reg_out, scene->proposals, scene->id,
                                      opts.nms_thresh, opts.score_floor);
        test_detections.insert(test_detections.end(), dets.begin(), dets.end());
    }

    for (const auto* scene : train_split) {
        Mat x_inf, reg_out, x_midn;
        scene_scores(*scene, x_inf, reg_out, x_midn);
        train_midn.push_back(std::move(x_midn));
        // Top-1 per existing class, decoded, before NMS.
        for (int c = 0; c < model.num_classes; ++c) {
            if (!scene->has_class(c)) continue;
            int top = 0;
            for (int i = 1; i < x_inf.cols; ++i)
                if (x_inf.at(c, i) > x_inf.at(c, top)) top = i;
            BBox decoded = decode_regression(
                scene->proposals[top], {reg_out.at(4 * c, top), reg_out.at(4 * c + 1, top),
                                        reg_out.at(4 * c + 2, top), reg_out.at(4 * c + 3, top)});
            const double x1 = std::clamp(decoded.x1, 0.0, 1.0);
            const double y1 = std::clamp(decoded.y1, 0.0, 1.0);
            const double x2 = std::clamp(decoded.x2, 0.0, 1.0);
            const double y2 = std::clamp(decoded.y2, 0.0, 1.0);
            if (x2 <= x1 || y2 <= y1) continue;
            train_top1.push_back({scene->id, c, BBox(x1, y1, x2, y2), x_inf.at(c, top)});
        }
    }

    EvalReport report;
    report.train_scenes = static_cast<long>(train_split.size());
    report.test_scenes = static_cast<long>(test_split.size());
    if (!test_split.empty())
        report.ap = average_precision(test_detections, test_split, model.num_classes,
                                      opts.iou_thresh);
    if (!train_split.empty()) {
        report.corloc = corloc(train_top1, train_split);
        report.macc75 = macc_at_1(train_midn, train_split, 0.75);
        report.macc85 = macc_at_1(train_midn, train_split, 0.85);
    }
    return report;
}

void write_metrics_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out.precision(17);
    out << "metric,class,value\n";
    for (size_t c = 0; c < report.ap.per_class.size(); ++c)
        if (!std::isnan(report.ap.per_class[c]))
            out << "ap," << c << ',' << report.ap.per_class[c] << '\n';
    out << "map,," << report.ap.map << '\n';
    out << "corloc,," << report.corloc << '\n';
    out << "macc1_0.75,," << report.macc75.mean << '\n';
    out << "macc1_0.85,," << report.macc85.mean << '\n';
}

void write_metrics_json(const EvalReport& report, const EvalOptions& opts,
                        const std::string& path) {
    nlohmann::ordered_json j;
    j["score_source"] = to_string(opts.source);
    j["test_scenes"] = report.test_scenes;
    j["train_scenes"] = report.train_scenes;
    auto ap = nlohmann::ordered_json::array();
    for (size_t c = 0; c < report.ap.per_class.size(); ++c)
        ap.push_back(std::isnan(report.ap.per_class[c])
                         ? nlohmann::ordered_json(nullptr)
                         : nlohmann::ordered_json(report.ap.per_class[c]));
    j["per_class_ap"] = ap;
    j["map"] = report.ap.map;
    j["corloc"] = report.corloc;
    j["macc1"] = {{"0.75", report.macc75.mean}, {"0.85", report.macc85.mean}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace cbl
