#include "cbl/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cbl {

namespace {

using ordered_json = nlohmann::ordered_json;

/// Strict reader: every key consumed explicitly, leftovers are errors.
class Section {
public:
    Section(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename T>
    void read(const char* key, T& target) {
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                target = it->get<T>();
            } catch (const std::exception&) {
                throw ConfigError(path_ + "." + key + ": wrong type");
            }
            seen_.insert(key);
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    const ordered_json* sub(const char* key) {
        if (auto it = j_.find(key); it != j_.end()) {
            seen_.insert(key);
            return &*it;
        }
        return nullptr;
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.contains(key)) throw ConfigError("unknown config key: " + path_ + "." + key);
    }

private:
    const ordered_json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

EmaMode ema_mode_from_string(const std::string& s) {
    if (s == "single") return EmaMode::kSingle;
    if (s == "average") return EmaMode::kAverage;
    if (s == "weighted") return EmaMode::kWeighted;
    throw ConfigError("unknown ema mode: " + s);
}

std::string to_string(EmaMode m) {
    switch (m) {
        case EmaMode::kSingle: return "single";
        case EmaMode::kAverage: return "average";
        case EmaMode::kWeighted: return "weighted";
    }
    return "?";
}

EmaSingleSource ema_source_from_string(const std::string& s) {
    if (s == "oic-last") return EmaSingleSource::kOicLast;
    if (s == "rcnn-cls") return EmaSingleSource::kRcnnCls;
    throw ConfigError("unknown ema single source: " + s);
}

std::string to_string(EmaSingleSource s) {
    return s == EmaSingleSource::kOicLast ? "oic-last" : "rcnn-cls";
}

void parse_gen(const ordered_json& j, GenConfig& gen) {
    Section s(j, "gen");
    s.read("num_classes", gen.num_classes);
    s.read("objects_min", gen.objects_min);
    s.read("objects_max", gen.objects_max);
    s.read("proposals_per_scene", gen.proposals_per_scene);
    s.read("jitter_scale", gen.jitter_scale);
    s.read("part_fraction", gen.part_fraction);
    s.read("background_fraction", gen.background_fraction);
    s.read("feature_dim", gen.feature_dim);
    s.read("noise_sigma", gen.noise_sigma);
    s.read("seed", gen.seed);
    s.finish();
}

void parse_train(const ordered_json& j, TrainConfig& t) {
    Section s(j, "train");
    s.read("iterations", t.iterations);
    s.read("learning_rate", t.learning_rate);
    s.read("learning_rate_drop", t.learning_rate_drop);
    s.read("lr_drop_fraction", t.lr_drop_fraction);
    s.read("momentum", t.momentum);
    s.read("weight_decay", t.weight_decay);
    s.read("batch_size", t.batch_size);
    s.read("hidden_dim", t.hidden_dim);
    s.read("k_heads", t.k_heads);
    s.read("neighbor_thresh", t.neighbor_thresh);
    s.read("bg_weight_scale", t.bg_weight_scale);
    s.read("msr_start_fraction", t.msr_start_fraction);
    s.read("enable_wet", t.enable_wet);
    s.read("enable_crd", t.enable_crd);
    s.read("enable_msr", t.enable_msr);
    s.read("grad_clip_norm", t.grad_clip_norm);
    s.read("log_interval", t.log_interval);
    s.read("checkpoint_interval", t.checkpoint_interval);
    s.read("seed", t.seed);

    if (const auto* e = s.sub("ema")) {
        Section es(*e, "train.ema");
        es.read("alpha", t.ema.alpha);
        std::string mode = to_string(t.ema.mode);
        es.read("mode", mode);
        t.ema.mode = ema_mode_from_string(mode);
        std::string src = to_string(t.ema.single_source);
        es.read("single_source", src);
        t.ema.single_source = ema_source_from_string(src);
        es.finish();
    }
    if (const auto* c = s.sub("crd")) {
        Section cs(*c, "train.crd");
        cs.read("tau0", t.crd.tau0);
        cs.read("tau1", t.crd.tau1);
        cs.read("iter_max", t.crd.iter_max);
        cs.read("temperature", t.crd.temperature);
        cs.finish();
    }
    if (const auto* m = s.sub("msr")) {
        Section ms(*m, "train.msr");
        ms.read("mu_s", t.msr.mu_s);
        ms.read("mu_n", t.msr.mu_n);
        ms.read("gamma", t.msr.gamma);
        ms.read("nms_thresh", t.msr.nms_thresh);
        ms.read("match_thresh", t.msr.match_thresh);
        ms.finish();
    }
    s.finish();
}

void parse_eval(const ordered_json& j, EvalOptions& e) {
    Section s(j, "eval");
    std::string src = to_string(e.source);
    s.read("score_source", src);
    e.source = score_source_from_string(src);
    s.read("nms_thresh", e.nms_thresh);
    s.read("score_floor", e.score_floor);
    s.read("iou_thresh", e.iou_thresh);
    s.finish();
}

}  // namespace

void RunConfig::validate() const {
    gen.validate();
    if (num_scenes < 1) throw ConfigError("num_scenes must be >= 1");
    train.validate();
    if (eval.nms_thresh < 0.0 || eval.nms_thresh > 1.0)
        throw ConfigError("eval.nms_thresh must lie in [0,1]");
    if (eval.iou_thresh < 0.0 || eval.iou_thresh > 1.0)
        throw ConfigError("eval.iou_thresh must lie in [0,1]");
    if (out_dir.empty()) throw ConfigError("out_dir must be non-empty");
}

RunConfig run_config_from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    RunConfig cfg;
    Section root(j, "config");
    if (root.has("preset")) {
        std::string preset;
        root.read("preset", preset);
        if (!preset.empty()) apply_preset(cfg, preset);
    }
    if (const auto* g = root.sub("gen")) parse_gen(*g, cfg.gen);
    if (const auto* t = root.sub("train")) parse_train(*t, cfg.train);
    if (const auto* e = root.sub("eval")) parse_eval(*e, cfg.eval);
    root.read("num_scenes", cfg.num_scenes);
    root.read("dataset", cfg.dataset);
    root.read("out_dir", cfg.out_dir);
    root.finish();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return run_config_from_json_text(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["preset"] = cfg.preset;
    j["num_scenes"] = cfg.num_scenes;
    j["dataset"] = cfg.dataset;
    j["out_dir"] = cfg.out_dir;
    j["gen"] = {{"num_classes", cfg.gen.num_classes},
                {"objects_min", cfg.gen.objects_min},
                {"objects_max", cfg.gen.objects_max},
                {"proposals_per_scene", cfg.gen.proposals_per_scene},
                {"jitter_scale", cfg.gen.jitter_scale},
                {"part_fraction", cfg.gen.part_fraction},
                {"background_fraction", cfg.gen.background_fraction},
                {"feature_dim", cfg.gen.feature_dim},
                {"noise_sigma", cfg.gen.noise_sigma},
                {"seed", cfg.gen.seed}};
    j["train"] = {{"iterations", cfg.train.iterations},
                  {"learning_rate", cfg.train.learning_rate},
                  {"learning_rate_drop", cfg.train.learning_rate_drop},
                  {"lr_drop_fraction", cfg.train.lr_drop_fraction},
                  {"momentum", cfg.train.momentum},
                  {"weight_decay", cfg.train.weight_decay},
                  {"batch_size", cfg.train.batch_size},
                  {"hidden_dim", cfg.train.hidden_dim},
                  {"k_heads", cfg.train.k_heads},
                  {"neighbor_thresh", cfg.train.neighbor_thresh},
                  {"bg_weight_scale", cfg.train.bg_weight_scale},
                  {"msr_start_fraction", cfg.train.msr_start_fraction},
                  {"enable_wet", cfg.train.enable_wet},
                  {"enable_crd", cfg.train.enable_crd},
                  {"enable_msr", cfg.train.enable_msr},
                  {"grad_clip_norm", cfg.train.grad_clip_norm},
                  {"log_interval", cfg.train.log_interval},
                  {"checkpoint_interval", cfg.train.checkpoint_interval},
                  {"seed", cfg.train.seed},
                  {"ema",
                   {{"alpha", cfg.train.ema.alpha},
                    {"mode", to_string(cfg.train.ema.mode)},
                    {"single_source", to_string(cfg.train.ema.single_source)}}},
                  {"crd",
                   {{"tau0", cfg.train.crd.tau0},
                    {"tau1", cfg.train.crd.tau1},
                    {"iter_max", cfg.train.crd.iter_max},
                    {"temperature", cfg.train.crd.temperature}}},
                  {"msr",
                   {{"mu_s", cfg.train.msr.mu_s},
                    {"mu_n", cfg.train.msr.mu_n},
                    {"gamma", cfg.train.msr.gamma},
                    {"nms_thresh", cfg.train.msr.nms_thresh},
                    {"match_thresh", cfg.train.msr.match_thresh}}}};
    j["eval"] = {{"score_source", to_string(cfg.eval.source)},
                 {"nms_thresh", cfg.eval.nms_thresh},
                 {"score_floor", cfg.eval.score_floor},
                 {"iou_thresh", cfg.eval.iou_thresh}};
    return j.dump(2) + "\n";
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << run_config_to_json(cfg);
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
    if (preset == "baseline") {
        cfg.train.enable_wet = false;
        cfg.train.enable_crd = false;
        cfg.train.enable_msr = false;
        cfg.eval.source = ScoreSource::kBasic;
    } else if (preset == "cbl" || preset == "w-ema") {
        cfg.train.enable_wet = true;
        cfg.train.enable_crd = true;
        cfg.train.enable_msr = true;
        cfg.train.ema.mode = EmaMode::kWeighted;
        cfg.eval.source = ScoreSource::kWeighted;
    } else if (preset == "ema-last-oic") {
        apply_preset(cfg, "cbl");
        cfg.train.ema.mode = EmaMode::kSingle;
        cfg.train.ema.single_source = EmaSingleSource::kOicLast;
    } else if (preset == "ema-cls") {
        apply_preset(cfg, "cbl");
        cfg.train.ema.mode = EmaMode::kSingle;
        cfg.train.ema.single_source = EmaSingleSource::kRcnnCls;
    } else if (preset == "a-ema") {
        apply_preset(cfg, "cbl");
        cfg.train.ema.mode = EmaMode::kAverage;
    } else {
        throw ConfigError("unknown preset: " + preset);
    }
    cfg.preset = preset;
}

std::string resolve_out_dir(const RunConfig& cfg) {
    const char* root = std::getenv("CBL_OUT_ROOT");
    if (root && root[0] != '\0' && !cfg.out_dir.empty() && cfg.out_dir.front() != '/')
        return std::string(root) + "/" + cfg.out_dir;
    return cfg.out_dir;
}

}  // namespace cbl
