// cbl: corpus generation, training, evaluation, and per-scene inspection for
// the cyclic-bootstrap labeling pipeline on synthetic detection scenes.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbl/checkpoint.hpp"
#include "cbl/eval.hpp"
#include "cbl/run_config.hpp"
#include "cbl/synth.hpp"
#include "cbl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct FlagOverrides {
    // gen
    std::optional<int> classes, objects_min, objects_max, proposals, feature_dim;
    std::optional<double> jitter, part_fraction, background_fraction, noise_sigma;
    std::optional<std::uint64_t> gen_seed;
    std::optional<long> num_scenes;
    // train
    std::optional<long> iterations, log_interval, checkpoint_interval, iter_max;
    std::optional<double> lr, lr_drop, lr_drop_fraction, momentum, weight_decay;
    std::optional<int> batch_size, hidden_dim, k_heads;
    std::optional<double> neighbor_thresh, bg_weight_scale, msr_start, alpha, tau0, tau1, temperature;
    std::optional<double> mu_s, mu_n, gamma, msr_nms, match_thresh, grad_clip;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::string> ema_mode, ema_source, preset;
    std::optional<bool> wet, crd, msr;
    // eval
    std::optional<std::string> score_source;
    std::optional<double> eval_nms, score_floor, iou_thresh;
    // io
    std::optional<std::string> dataset, out_dir;
};

void add_common_flags(CLI::App* cmd, FlagOverrides& f, std::string& config_path) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--dataset", f.dataset, "dataset snapshot path");
    cmd->add_option("--out-dir", f.out_dir, "output directory");
}

void add_gen_flags(CLI::App* cmd, FlagOverrides& f) {
    cmd->add_option("--classes", f.classes, "number of object classes");
    cmd->add_option("--objects-min", f.objects_min, "min objects per scene");
    cmd->add_option("--objects-max", f.objects_max, "max objects per scene");
    cmd->add_option("--proposals", f.proposals, "proposals per scene");
    cmd->add_option("--jitter", f.jitter, "jitter scale for gt copies");
    cmd->add_option("--part-fraction", f.part_fraction, "share of part proposals");
    cmd->add_option("--background-fraction", f.background_fraction, "share of clutter proposals");
    cmd->add_option("--feature-dim", f.feature_dim, "proposal feature dimension");
    cmd->add_option("--noise-sigma", f.noise_sigma, "feature noise sigma");
    cmd->add_option("--gen-seed", f.gen_seed, "corpus seed");
    cmd->add_option("--num-scenes", f.num_scenes, "scene count");
}

void add_train_flags(CLI::App* cmd, FlagOverrides& f) {
    cmd->add_option("--preset", f.preset,
                    "baseline | cbl | ema-last-oic | ema-cls | a-ema | w-ema");
    cmd->add_option("--iterations", f.iterations, "training iterations");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--lr-drop", f.lr_drop, "learning rate after the drop point");
    cmd->add_option("--lr-drop-fraction", f.lr_drop_fraction, "drop point as run fraction");
    cmd->add_option("--momentum", f.momentum, "SGD momentum");
    cmd->add_option("--weight-decay", f.weight_decay, "SGD weight decay");
    cmd->add_option("--batch-size", f.batch_size, "scenes per iteration");
    cmd->add_option("--hidden-dim", f.hidden_dim, "trunk output width");
    cmd->add_option("--k-heads", f.k_heads, "number of refinement heads");
    cmd->add_option("--neighbor-thresh", f.neighbor_thresh, "positive-neighbor IoU");
    cmd->add_option("--bg-weight-scale", f.bg_weight_scale, "background weight relative to the seed score");
    cmd->add_option("--msr-start", f.msr_start, "seed-mining activation fraction");
    cmd->add_option("--alpha", f.alpha, "teacher smoothing coefficient");
    cmd->add_option("--ema-mode", f.ema_mode, "single | average | weighted");
    cmd->add_option("--ema-single-source", f.ema_source, "oic-last | rcnn-cls");
    cmd->add_option("--tau0", f.tau0, "distillation overlap ramp start");
    cmd->add_option("--tau1", f.tau1, "distillation overlap ramp end");
    cmd->add_option("--iter-max", f.iter_max, "distillation horizon (0 = run length)");
    cmd->add_option("--temperature", f.temperature, "rank softmax temperature");
    cmd->add_option("--mu-s", f.mu_s, "seed score factor");
    cmd->add_option("--mu-n", f.mu_n, "seed number factor");
    cmd->add_option("--gamma", f.gamma, "seed confidence exponent");
    cmd->add_option("--msr-nms", f.msr_nms, "seed NMS threshold");
    cmd->add_option("--match-thresh", f.match_thresh, "seed agreement IoU");
    cmd->add_option("--grad-clip", f.grad_clip, "global grad-norm clip (0 = off)");
    cmd->add_option("--log-interval", f.log_interval, "iterations between history rows");
    cmd->add_option("--checkpoint-interval", f.checkpoint_interval, "interval checkpoints");
    cmd->add_option("--train-seed", f.train_seed, "training RNG seed");
    cmd->add_flag("--wet,!--no-wet", f.wet, "enable the ensemble teacher");
    cmd->add_flag("--crd,!--no-crd", f.crd, "enable ranking distillation");
    cmd->add_flag("--msr,!--no-msr", f.msr, "enable multi-seed mining");
}

void add_eval_flags(CLI::App* cmd, FlagOverrides& f) {
    cmd->add_option("--score-source", f.score_source,
                    "basic | average | weighted | wet-only | wet-head");
    cmd->add_option("--nms-thresh", f.eval_nms, "detection NMS threshold");
    cmd->add_option("--score-floor", f.score_floor, "detection score floor");
    cmd->add_option("--iou-thresh", f.iou_thresh, "true-positive overlap");
}

cbl::RunConfig assemble_config(const std::string& config_path, const FlagOverrides& f) {
    cbl::RunConfig cfg;
    if (!config_path.empty()) {
        if (!fs::exists(config_path)) throw cbl::ConfigError("config not found: " + config_path);
        cfg = cbl::load_run_config(config_path);
    }
    if (f.preset) cbl::apply_preset(cfg, *f.preset);

    auto set = [](auto& target, const auto& opt) {
        if (opt) target = *opt;
    };
    set(cfg.gen.num_classes, f.classes);
    set(cfg.gen.objects_min, f.objects_min);
    set(cfg.gen.objects_max, f.objects_max);
    set(cfg.gen.proposals_per_scene, f.proposals);
    set(cfg.gen.jitter_scale, f.jitter);
    set(cfg.gen.part_fraction, f.part_fraction);
    set(cfg.gen.background_fraction, f.background_fraction);
    set(cfg.gen.feature_dim, f.feature_dim);
    set(cfg.gen.noise_sigma, f.noise_sigma);
    set(cfg.gen.seed, f.gen_seed);
    set(cfg.num_scenes, f.num_scenes);

    set(cfg.train.iterations, f.iterations);
    set(cfg.train.learning_rate, f.lr);
    set(cfg.train.learning_rate_drop, f.lr_drop);
    set(cfg.train.lr_drop_fraction, f.lr_drop_fraction);
    set(cfg.train.momentum, f.momentum);
    set(cfg.train.weight_decay, f.weight_decay);
    set(cfg.train.batch_size, f.batch_size);
    set(cfg.train.hidden_dim, f.hidden_dim);
    set(cfg.train.k_heads, f.k_heads);
    set(cfg.train.neighbor_thresh, f.neighbor_thresh);
    set(cfg.train.bg_weight_scale, f.bg_weight_scale);
    set(cfg.train.msr_start_fraction, f.msr_start);
    set(cfg.train.ema.alpha, f.alpha);
    if (f.ema_mode) {
        if (*f.ema_mode == "single") cfg.train.ema.mode = cbl::EmaMode::kSingle;
        else if (*f.ema_mode == "average") cfg.train.ema.mode = cbl::EmaMode::kAverage;
        else if (*f.ema_mode == "weighted") cfg.train.ema.mode = cbl::EmaMode::kWeighted;
        else throw cbl::ConfigError("unknown ema mode: " + *f.ema_mode);
    }
    if (f.ema_source) {
        if (*f.ema_source == "oic-last")
            cfg.train.ema.single_source = cbl::EmaSingleSource::kOicLast;
        else if (*f.ema_source == "rcnn-cls")
            cfg.train.ema.single_source = cbl::EmaSingleSource::kRcnnCls;
        else throw cbl::ConfigError("unknown ema single source: " + *f.ema_source);
    }
    set(cfg.train.crd.tau0, f.tau0);
    set(cfg.train.crd.tau1, f.tau1);
    set(cfg.train.crd.iter_max, f.iter_max);
    set(cfg.train.crd.temperature, f.temperature);
    set(cfg.train.msr.mu_s, f.mu_s);
    set(cfg.train.msr.mu_n, f.mu_n);
    set(cfg.train.msr.gamma, f.gamma);
    set(cfg.train.msr.nms_thresh, f.msr_nms);
    set(cfg.train.msr.match_thresh, f.match_thresh);
    set(cfg.train.grad_clip_norm, f.grad_clip);
    set(cfg.train.log_interval, f.log_interval);
    set(cfg.train.checkpoint_interval, f.checkpoint_interval);
    set(cfg.train.seed, f.train_seed);
    set(cfg.train.enable_wet, f.wet);
    set(cfg.train.enable_crd, f.crd);
    set(cfg.train.enable_msr, f.msr);

    if (f.score_source) cfg.eval.source = cbl::score_source_from_string(*f.score_source);
    set(cfg.eval.nms_thresh, f.eval_nms);
    set(cfg.eval.score_floor, f.score_floor);
    set(cfg.eval.iou_thresh, f.iou_thresh);

    set(cfg.dataset, f.dataset);
    set(cfg.out_dir, f.out_dir);
    return cfg;
}

std::vector<cbl::Scene> load_dataset_checked(const std::string& path) {
    if (path.empty()) throw cbl::ConfigError("no dataset given (--dataset or config)");
    if (!fs::exists(path)) throw cbl::ConfigError("dataset not found: " + path);
    return cbl::load_dataset(path);
}

void print_eval_warnings(const cbl::EvalReport& report) {
    for (int c : report.macc75.excluded)
        std::cerr << "warning: class " << c
                  << " absent from the train split, excluded from mAcc@1\n";
    for (int c : report.ap.excluded)
        std::cerr << "warning: class " << c << " has no test ground truth, excluded from mAP\n";
}

int cmd_gen(const std::string& config_path, const FlagOverrides& f, const std::string& out) {
    cbl::RunConfig cfg = assemble_config(config_path, f);
    cfg.validate();
    std::string out_path = out;
    if (out_path.empty()) out_path = cbl::resolve_out_dir(cfg) + "/dataset.jsonl";
    if (const auto dir = fs::path(out_path).parent_path(); !dir.empty())
        fs::create_directories(dir);

    const auto scenes = cbl::gen_dataset(cfg.gen, cfg.num_scenes);
    cbl::save_dataset(scenes, out_path);
    cfg.dataset = out_path;
    cbl::save_run_config(cfg, out_path + ".config.json");

    long relaxed = 0;
    for (const auto& s : scenes) relaxed += s.background_relaxed ? 1 : 0;
    std::cout << "wrote " << scenes.size() << " scenes to " << out_path;
    if (relaxed > 0) std::cout << " (" << relaxed << " with relaxed clutter placement)";
    std::cout << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const FlagOverrides& f) {
    cbl::RunConfig cfg = assemble_config(config_path, f);
    cfg.validate();
    const auto scenes = load_dataset_checked(cfg.dataset);

    const std::string out_dir = cbl::resolve_out_dir(cfg);
    fs::create_directories(out_dir);
    cbl::save_run_config(cfg, out_dir + "/resolved_config.json");

    const auto result = cbl::train(cfg.train, scenes, out_dir);
    cbl::save_checkpoint(out_dir + "/checkpoint.bin",
                         cbl::to_checkpoint(result, cfg.train.enable_wet));
    cbl::write_history_csv(result.history, cfg.train.k_heads, out_dir + "/history.csv");

    const auto report = cbl::evaluate(
        result.model, cfg.train.enable_wet ? &result.teacher : nullptr, scenes, cfg.eval);
    cbl::write_metrics_csv(report, out_dir + "/metrics.csv");
    cbl::write_metrics_json(report, cfg.eval, out_dir + "/metrics.json");
    print_eval_warnings(report);

    std::cout << "trained " << result.iteration << " iterations"
              << "  mAP=" << report.ap.map << "  CorLoc=" << report.corloc
              << "  mAcc@1(0.75)=" << report.macc75.mean
              << "  mAcc@1(0.85)=" << report.macc85.mean << "\n"
              << "outputs in " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const FlagOverrides& f,
             const std::string& checkpoint_path) {
    cbl::RunConfig cfg = assemble_config(config_path, f);
    if (checkpoint_path.empty()) throw cbl::ConfigError("--checkpoint is required");
    if (!fs::exists(checkpoint_path))
        throw cbl::ConfigError("checkpoint not found: " + checkpoint_path);

    const auto ckpt = cbl::load_checkpoint(checkpoint_path);
    const auto scenes = load_dataset_checked(cfg.dataset);

    const std::string out_dir = cbl::resolve_out_dir(cfg);
    fs::create_directories(out_dir);
    cbl::save_run_config(cfg, out_dir + "/resolved_config.json");

    const auto report = cbl::evaluate(ckpt.model, ckpt.has_teacher ? &ckpt.teacher : nullptr,
                                      scenes, cfg.eval);
    cbl::write_metrics_csv(report, out_dir + "/metrics.csv");
    cbl::write_metrics_json(report, cfg.eval, out_dir + "/metrics.json");
    print_eval_warnings(report);

    std::cout << "mAP=" << report.ap.map << "  CorLoc=" << report.corloc
              << "  mAcc@1(0.75)=" << report.macc75.mean
              << "  mAcc@1(0.85)=" << report.macc85.mean << "\n";
    return 0;
}

ordered_json top_proposals_json(const cbl::Mat& scores, const cbl::Scene& scene, int top_k) {
    ordered_json out = ordered_json::array();
    for (int c = 0; c < scene.num_classes(); ++c) {
        if (!scene.has_class(c)) continue;
        std::vector<int> order(scores.cols);
        for (int i = 0; i < scores.cols; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores.at(c, a) != scores.at(c, b)) return scores.at(c, a) > scores.at(c, b);
            return a < b;
        });
        ordered_json entry;
        entry["class"] = c;
        entry["top"] = ordered_json::array();
        for (int r = 0; r < std::min(top_k, scores.cols); ++r) {
            const int i = order[r];
            const auto& b = scene.proposals[i];
            entry["top"].push_back({{"proposal", i},
                                    {"score", scores.at(c, i)},
                                    {"box", {b.x1, b.y1, b.x2, b.y2}}});
        }
        out.push_back(entry);
    }
    return out;
}

int cmd_inspect(const std::string& config_path, const FlagOverrides& f,
                const std::string& checkpoint_path, long scene_id,
                std::optional<double> tau_override) {
    cbl::RunConfig cfg = assemble_config(config_path, f);
    if (checkpoint_path.empty()) throw cbl::ConfigError("--checkpoint is required");
    if (!fs::exists(checkpoint_path))
        throw cbl::ConfigError("checkpoint not found: " + checkpoint_path);

    const auto ckpt = cbl::load_checkpoint(checkpoint_path);
    const auto scenes = load_dataset_checked(cfg.dataset);
    const cbl::Scene* scene = nullptr;
    for (const auto& s : scenes)
        if (s.id == scene_id) {
            scene = &s;
            break;
        }
    if (!scene) throw cbl::ConfigError("scene not found: " + std::to_string(scene_id));

    cbl::CrdConfig crd_cfg = cfg.train.crd;
    if (crd_cfg.iter_max == 0) crd_cfg.iter_max = std::max<long>(ckpt.iteration, 1);
    const double tau = tau_override ? *tau_override : cbl::tau_schedule(ckpt.iteration, crd_cfg);

    const auto fwd = cbl::midn_forward(ckpt.model.midn, scene->features);
    ordered_json j;
    j["scene"] = scene->id;
    j["iteration"] = ckpt.iteration;
    j["tau"] = tau;
    j["midn_top"] = top_proposals_json(fwd.x_midn, *scene, 5);

    std::vector<cbl::Mat> oic_probs(ckpt.model.k_heads());
    for (int k = 0; k < ckpt.model.k_heads(); ++k)
        oic_probs[k] = cbl::oic_forward(ckpt.model.oic, k, fwd.hidden);

    j["refine_seeds"] = ordered_json::array();
    for (int k = 0; k < ckpt.model.k_heads(); ++k) {
        const auto labels =
            k == 0 ? cbl::midn_seed_labels(fwd.x_midn, scene->y_img, scene->proposals,
                                           cfg.train.neighbor_thresh)
                   : cbl::gen_refine_labels(oic_probs[k - 1], scene->y_img, scene->proposals,
                                            cfg.train.neighbor_thresh);
        for (const auto& [c, idx] : labels.seed_of_cls)
            j["refine_seeds"].push_back(
                {{"head", k + 1}, {"class", c}, {"proposal", idx}, {"weight", labels.weight[idx]}});
    }

    if (ckpt.has_teacher) {
        const auto wet = cbl::wet_forward(ckpt.teacher, scene->features);
        j["wet_top"] = top_proposals_json(wet.probs, *scene, 5);

        j["positive_sets"] = ordered_json::array();
        for (int c = 0; c < scene->num_classes(); ++c) {
            if (!scene->has_class(c)) continue;
            const auto ps = cbl::build_positive_set(wet.probs, scene->proposals, c, tau);
            j["positive_sets"].push_back({{"class", c},
                                          {"anchor", ps.anchor},
                                          {"weight", ps.weight},
                                          {"members", ps.members}});
        }

        const auto x_msr = cbl::ensemble_scores(wet.probs, oic_probs.back());
        auto seeds = cbl::mine_seeds(x_msr, scene->proposals, scene->y_img, cfg.train.msr);
        cbl::seed_confidence(seeds, oic_probs.back(), wet.probs, scene->proposals, cfg.train.msr);
        j["msr_seeds"] = ordered_json::array();
        for (const auto& s : seeds) {
            const auto& b = scene->proposals[s.index];
            j["msr_seeds"].push_back({{"scene", scene->id},
                                      {"class", s.cls},
                                      {"proposal", s.index},
                                      {"box", {b.x1, b.y1, b.x2, b.y2}},
                                      {"score", s.score},
                                      {"p", s.agreement},
                                      {"w", s.confidence}});
        }
    }

    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cyclic-bootstrap labeling on synthetic detection scenes"};
    app.require_subcommand(1);

    FlagOverrides f;
    std::string config_path;
    std::string gen_out;
    std::string checkpoint_path;
    long scene_id = 0;
    std::optional<double> tau_override;

    auto* gen = app.add_subcommand("gen", "generate a dataset snapshot");
    add_common_flags(gen, f, config_path);
    add_gen_flags(gen, f);
    gen->add_option("--out", gen_out, "snapshot output path");

    auto* train = app.add_subcommand("train", "train on a dataset snapshot");
    add_common_flags(train, f, config_path);
    add_gen_flags(train, f);
    add_train_flags(train, f);
    add_eval_flags(train, f);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common_flags(eval, f, config_path);
    add_eval_flags(eval, f);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint path");

    auto* inspect = app.add_subcommand("inspect", "dump per-scene labeling state");
    add_common_flags(inspect, f, config_path);
    add_train_flags(inspect, f);
    inspect->add_option("--checkpoint", checkpoint_path, "checkpoint path");
    inspect->add_option("--scene", scene_id, "scene id")->required();
    inspect->add_option("--tau", tau_override, "override the overlap threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(config_path, f, gen_out);
        if (train->parsed()) return cmd_train(config_path, f);
        if (eval->parsed()) return cmd_eval(config_path, f, checkpoint_path);
        if (inspect->parsed())
            return cmd_inspect(config_path, f, checkpoint_path, scene_id, tau_override);
    } catch (const cbl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
