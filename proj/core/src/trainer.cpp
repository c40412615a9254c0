#include "cbl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cbl/checkpoint.hpp"

namespace cbl {

void TrainConfig::validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (learning_rate <= 0.0 || learning_rate_drop <= 0.0)
        throw ConfigError("learning rates must be positive");
    if (lr_drop_fraction <= 0.0 || lr_drop_fraction > 1.0)
        throw ConfigError("lr_drop_fraction must lie in (0,1]");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (k_heads < 1) throw ConfigError("k_heads must be >= 1");
    if (neighbor_thresh < 0.0 || neighbor_thresh > 1.0)
        throw ConfigError("neighbor_thresh must lie in [0,1]");
    if (bg_weight_scale < 0.0 || bg_weight_scale > 1.0)
        throw ConfigError("bg_weight_scale must lie in [0,1]");
    if (msr_start_fraction <= 0.0 || msr_start_fraction > 1.0)
        throw ConfigError("msr_start_fraction must lie in (0,1]");
    if (log_interval < 1) throw ConfigError("log_interval must be >= 1");
    if ((enable_crd || enable_msr) && !enable_wet)
        throw ConfigError("CRD and MSR require the teacher (enable_wet)");
    ema.validate();
    if (crd.iter_max > 0) crd.validate();
    msr.validate();
}

long TrainConfig::msr_start_iter() const {
    return std::llround(msr_start_fraction * static_cast<double>(iterations));
}

double lambda_schedule(long iter_cur, long horizon) {
    CBL_CHECK(horizon >= 1, "horizon must be >= 1");
    return std::max(0.0, 1.0 - static_cast<double>(iter_cur) / static_cast<double>(horizon));
}

double total_loss(const LossParts& parts, double lambda) {
    double sum = lambda * parts.midn + (1.0 - lambda) * parts.crd + parts.rcnn;
    for (double v : parts.oic) sum += v;
    return sum;
}

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              double lr, double momentum, double weight_decay) {
    CBL_CHECK(param.size() == grad.size() && param.size() == velocity.size(),
              "sgd buffers must share length");
    for (size_t i = 0; i < param.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
        param[i] -= lr * velocity[i];
    }
}

namespace {

std::vector<Seed> top_scoring_seeds(const Mat& probs, const std::vector<int>& y_img) {
    // Basic-pipeline rule: one seed per existing class, the argmax proposal
    // of the last OIC head, confidence = its score.
    std::vector<Seed> seeds;
    for (int c = 0; c < static_cast<int>(y_img.size()); ++c) {
        if (!y_img[c]) continue;
        int best = 0;
        for (int i = 1; i < probs.cols; ++i)
            if (probs.at(c, i) > probs.at(c, best)) best = i;
        Seed s;
        s.index = best;
        s.cls = c;
        s.score = probs.at(c, best);
        s.confidence = s.score;
        seeds.push_back(s);
    }
    return seeds;
}

void accumulate(AffineParams& dst, const AffineGrads& g) {
    for (size_t i = 0; i < dst.weight.size(); ++i) dst.weight.data[i] += g.weight.data[i];
    for (size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += g.bias[i];
}

}  // namespace

ScenePassResult scene_pass(const ModelParams& model, const WetParams* teacher,
                           const Scene& scene, double lambda, double tau, bool msr_active,
                           const TrainConfig& cfg, ModelParams* grads) {
    const int num_classes = model.num_classes;
    const int n = static_cast<int>(scene.proposals.size());
    CBL_CHECK(scene.num_classes() == num_classes, "scene/model class count mismatch");

    ScenePassResult res;

    // Forward.
    const MidnScores fwd = midn_forward(model.midn, scene.features);
    std::vector<Mat> oic_probs(model.k_heads());
    for (int k = 0; k < model.k_heads(); ++k) oic_probs[k] = oic_forward(model.oic, k, fwd.hidden);
    const Mat rcnn_probs = softmax_over_classes(affine_forward(model.rcnn.cls, fwd.hidden));
    const Mat reg_out = affine_forward(model.rcnn.reg, fwd.hidden);

    WetForward wet;
    if (teacher) wet = wet_forward(*teacher, scene.features);

    // Pseudo labels: head 1 from the MIDN scores, head k+1 from head k.
    std::vector<RefineLabels> refine(model.k_heads());
    refine[0] = midn_seed_labels(fwd.x_midn, scene.y_img, scene.proposals, cfg.neighbor_thresh,
                                 cfg.bg_weight_scale);
    for (int k = 1; k < model.k_heads(); ++k)
        refine[k] = gen_refine_labels(oic_probs[k - 1], scene.y_img, scene.proposals,
                                      cfg.neighbor_thresh, cfg.bg_weight_scale);

    // R-CNN labels: top-scoring rule from OIC_K before the MSR gate, mined
    // multi-seeds afterwards.
    std::vector<Seed> seeds;
    if (msr_active && teacher) {
        const Mat x_msr = ensemble_scores(wet.probs, oic_probs.back());
        seeds = mine_seeds(x_msr, scene.proposals, scene.y_img, cfg.msr);
        seed_confidence(seeds, oic_probs.back(), wet.probs, scene.proposals, cfg.msr);
    } else {
        seeds = top_scoring_seeds(oic_probs.back(), scene.y_img);
    }
    const RcnnLabels rcnn_labels = gen_rcnn_labels(seeds, scene.proposals, num_classes);

    // Losses.
    const MidnLoss midn = midn_loss(fwd.x_img, scene.y_img);
    res.midn = midn.value;

    CrdLoss crd;
    const bool use_crd = teacher && cfg.enable_crd;
    if (use_crd) {
        std::vector<PositiveSet> sets;
        for (int c = 0; c < num_classes; ++c)
            if (scene.y_img[c])
                sets.push_back(build_positive_set(wet.probs, scene.proposals, c, tau));
        crd = crd_loss(sets, fwd.x_midn, wet.probs, cfg.crd.temperature);
        res.crd = crd.value;
    }

    std::vector<LossGrad> oic_losses(model.k_heads());
    res.oic.resize(model.k_heads());
    for (int k = 0; k < model.k_heads(); ++k) {
        oic_losses[k] = oic_loss(oic_probs[k], refine[k]);
        res.oic[k] = oic_losses[k].value;
    }

    const LossGrad cls = rcnn_cls_loss(rcnn_probs, rcnn_labels);
    const LossGrad reg = rcnn_reg_loss(reg_out, rcnn_labels);
    res.cls = cls.value;
    res.reg = reg.value;

    if (!grads) return res;

    // Backward. Teacher terms are constants; everything else reaches the
    // shared trunk.
    Mat d_xmidn = fold_image_grad(midn.grad_x_img, n);
    for (auto& v : d_xmidn.data) v *= lambda;
    if (use_crd)
        for (size_t i = 0; i < d_xmidn.size(); ++i)
            d_xmidn.data[i] += (1.0 - lambda) * crd.grad_x_midn.data[i];

    const MidnBranchGrads branch = midn_branches_backward(model.midn, fwd, d_xmidn);
    accumulate(grads->midn.cls, branch.cls);
    accumulate(grads->midn.det, branch.det);
    Mat d_hidden = branch.hidden;

    for (int k = 0; k < model.k_heads(); ++k) {
        const Mat d_logits = softmax_over_classes_backward(oic_probs[k], oic_losses[k].grad);
        const AffineGrads g = affine_backward(model.oic.heads[k], fwd.hidden, d_logits);
        accumulate(grads->oic.heads[k], g);
        for (size_t i = 0; i < d_hidden.size(); ++i) d_hidden.data[i] += g.input.data[i];
    }

    {
        const Mat d_logits = softmax_over_classes_backward(rcnn_probs, cls.grad);
        const AffineGrads g = affine_backward(model.rcnn.cls, fwd.hidden, d_logits);
        accumulate(grads->rcnn.cls, g);
        for (size_t i = 0; i < d_hidden.size(); ++i) d_hidden.data[i] += g.input.data[i];
    }
    {
        const AffineGrads g = affine_backward(model.rcnn.reg, fwd.hidden, reg.grad);
        accumulate(grads->rcnn.reg, g);
        for (size_t i = 0; i < d_hidden.size(); ++i) d_hidden.data[i] += g.input.data[i];
    }

    accumulate(grads->midn.adapter, adapter_backward(model.midn.adapter, scene.features, fwd, d_hidden));
    return res;
}

TrainResult train(const TrainConfig& cfg, const std::vector<Scene>& dataset,
                  const std::string& checkpoint_dir) {
    cfg.validate();
    CBL_CHECK(!dataset.empty(), "dataset must be non-empty");

    std::vector<const Scene*> train_split;
    for (const auto& s : dataset)
        if (is_train_scene(s)) train_split.push_back(&s);
    if (train_split.empty()) throw ConfigError("train split is empty");

    const int num_classes = train_split.front()->num_classes();
    const int feature_dim = train_split.front()->features.rows;

    Rng rng(cfg.seed);
    TrainResult out;
    out.model = init_model(num_classes, feature_dim, cfg.hidden_dim, cfg.k_heads, rng);

    if (cfg.enable_wet)
        wet_init(out.teacher, out.model.midn.adapter, oic_head_ptrs(out.model),
                 out.model.rcnn.cls, cfg.ema);

    auto refs = tensor_refs(out.model);
    out.velocity.resize(refs.size());
    for (size_t i = 0; i < refs.size(); ++i) out.velocity[i].assign(refs[i].data->size(), 0.0);

    const long lr_drop_iter = std::llround(cfg.lr_drop_fraction * cfg.iterations);
    const long msr_start = cfg.msr_start_iter();
    const long crd_horizon = cfg.crd_horizon();

    for (long iter = 0; iter < cfg.iterations; ++iter) {
        const double lambda = cfg.enable_crd ? lambda_schedule(iter, cfg.iterations) : 1.0;
        CrdConfig crd_cfg = cfg.crd;
        crd_cfg.iter_max = crd_horizon;
        const double tau = tau_schedule(iter, crd_cfg);
        const double lr = iter < lr_drop_iter ? cfg.learning_rate : cfg.learning_rate_drop;
        const bool msr_active = cfg.enable_msr && iter >= msr_start;

        ModelParams grads = out.model.zeros_like();
        LossParts parts;
        parts.oic.assign(cfg.k_heads, 0.0);
        double cls_part = 0.0, reg_part = 0.0;

        std::vector<long> batch_ids;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto pick = rng.uniform_int(0, static_cast<long>(train_split.size()) - 1);
            const Scene& scene = *train_split[pick];
            batch_ids.push_back(scene.id);
            const auto r = scene_pass(out.model, cfg.enable_wet ? &out.teacher : nullptr, scene,
                                      lambda, tau, msr_active, cfg, &grads);
            parts.midn += r.midn;
            parts.crd += r.crd;
            for (int k = 0; k < cfg.k_heads; ++k) parts.oic[k] += r.oic[k];
            cls_part += r.cls;
            reg_part += r.reg;
        }

        const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
        parts.midn *= inv_b;
        parts.crd *= inv_b;
        for (auto& v : parts.oic) v *= inv_b;
        cls_part *= inv_b;
        reg_part *= inv_b;
        parts.rcnn = rcnn_loss(cls_part, reg_part);

        auto grad_refs = tensor_refs(grads);
        for (auto& gr : grad_refs)
            for (auto& v : *gr.data) v *= inv_b;

        const double total = total_loss(parts, lambda);
        if (!std::isfinite(total)) {
            std::ostringstream os;
            os << "non-finite loss at iteration " << iter << " (batch scenes:";
            for (long id : batch_ids) os << ' ' << id;
            os << ")";
            throw RuntimeAbort(os.str());
        }

        if (cfg.grad_clip_norm > 0.0) {
            double sq = 0.0;
            for (const auto& gr : grad_refs)
                for (double v : *gr.data) sq += v * v;
            const double norm = std::sqrt(sq);
            if (norm > cfg.grad_clip_norm) {
                const double scale = cfg.grad_clip_norm / norm;
                for (auto& gr : grad_refs)
                    for (auto& v : *gr.data) v *= scale;
            }
        }

        for (size_t i = 0; i < refs.size(); ++i) {
            for (double v : *grad_refs[i].data)
                if (!std::isfinite(v)) {
                    std::ostringstream os;
                    os << "non-finite gradient in " << refs[i].name << " at iteration " << iter;
                    throw RuntimeAbort(os.str());
                }
            sgd_step(*refs[i].data, *grad_refs[i].data, out.velocity[i], lr, cfg.momentum,
                     cfg.weight_decay);
        }

        if (cfg.enable_wet)
            wet_update(out.teacher, out.model.midn.adapter, oic_head_ptrs(out.model),
                       out.model.rcnn.cls, cfg.ema);

        out.iteration = iter + 1;

        if (iter % cfg.log_interval == 0 || iter == cfg.iterations - 1) {
            LossReport rep;
            rep.iteration = iter;
            rep.lambda = lambda;
            rep.tau = tau;
            rep.lr = lr;
            rep.midn = parts.midn;
            rep.crd = parts.crd;
            rep.oic = parts.oic;
            rep.cls = cls_part;
            rep.reg = reg_part;
            rep.rcnn = parts.rcnn;
            rep.total = total;
            out.history.push_back(rep);
        }

        if (!checkpoint_dir.empty() && cfg.checkpoint_interval > 0 &&
            (iter + 1) % cfg.checkpoint_interval == 0 && iter + 1 < cfg.iterations) {
            save_checkpoint(checkpoint_dir + "/checkpoint_" + std::to_string(iter + 1) + ".bin",
                            to_checkpoint(out, cfg.enable_wet));
        }
    }
    return out;
}

CheckpointData to_checkpoint(const TrainResult& result, bool has_teacher) {
    CheckpointData ckpt;
    ckpt.model = result.model;
    ckpt.teacher = result.teacher;
    ckpt.has_teacher = has_teacher;
    ckpt.velocity = result.velocity;
    ckpt.iteration = result.iteration;
    return ckpt;
}

void write_history_csv(const std::vector<LossReport>& history, int k_heads,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "iteration,lambda,tau,lr,loss_total,loss_midn,loss_crd";
    for (int k = 1; k <= k_heads; ++k) out << ",loss_oic" << k;
    out << ",loss_cls,loss_reg,loss_rcnn\n";

    std::ostringstream row;
    row.precision(17);
    for (const auto& r : history) {
        row.str("");
        row << r.iteration << ',' << r.lambda << ',' << r.tau << ',' << r.lr << ',' << r.total
            << ',' << r.midn << ',' << r.crd;
        for (double v : r.oic) row << ',' << v;
        row << ',' << r.cls << ',' << r.reg << ',' << r.rcnn << '\n';
        out << row.str();
    }
}

}  // namespace cbl
