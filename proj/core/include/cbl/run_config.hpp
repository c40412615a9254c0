#pragma once

#include <string>

#include "cbl/eval.hpp"
#include "cbl/synth.hpp"
#include "cbl/trainer.hpp"

namespace cbl {

/// Everything one run needs: generation, training, distillation, teacher,
/// and evaluation settings plus output locations. Defaults follow the
/// reference hyperparameters where they exist.
struct RunConfig {
    GenConfig gen;
    long num_scenes = 600;

    TrainConfig train;
    EvalOptions eval;

    std::string dataset;        // snapshot path (input for train/eval)
    std::string out_dir = "out";
    std::string preset;         // last applied preset, recorded for reruns

    void validate() const;
};

/// Parses a JSON config file. Unknown keys anywhere in the tree are hard
/// errors with the offending path in the message.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);

/// Serializes every field (the fully-resolved form written next to outputs).
std::string run_config_to_json(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::string& path);

/// Ablation presets:
///   baseline      basic pipeline, no teacher / distillation / seed mining
///   cbl           all components on, weighted teacher update (default)
///   ema-last-oic  teacher head tracks the last OIC branch
///   ema-cls       teacher head tracks the R-CNN CLS branch
///   a-ema         uniform average over all candidate branches
///   w-ema         weighted update (alias of cbl)
void apply_preset(RunConfig& cfg, const std::string& preset);

/// Output root override from the environment (CBL_OUT_ROOT), applied to
/// relative out_dir values.
std::string resolve_out_dir(const RunConfig& cfg);

}  // namespace cbl
