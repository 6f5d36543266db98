#pragma once

#include <string>
#include <vector>

#include "toggl/toy_train.hpp"

namespace toggl::toy {

// Aggregate demonstrator configuration, one human-readable JSON file with
// sections task/model/data/train/eval. Unknown keys anywhere are a
// ConfigError.
struct ToyConfig {
    SyntheticTask task;
    ModelConfig model;
    DataSpec data;
    TrainConfig train;
    EvalConfig eval;

    void validate() const;
};

ToyConfig default_config();

ToyConfig load_config(const std::string &path);
std::string config_to_json(const ToyConfig &config); // pretty, stable key order
void save_config(const std::string &path, const ToyConfig &config);

// Dotted-path override, e.g. apply_override(cfg, "train.steps", "2000").
// Values are parsed as JSON scalars; strings may be given bare.
void apply_override(ToyConfig &config, const std::string &path,
                    const std::string &value);

// FNV-1a over the canonical JSON dump, hex encoded.
std::string config_hash(const ToyConfig &config);

// Table-3-shaped ablation: each row is a single change applied on top of its
// parent row (full model; - PIT; then - CTC enhancement / - CTC; then
// - 3-mix data), trained with derived seeds and scored on 1-mix and 2-mix.
struct AblationRow {
    std::string label;
    ToyConfig config;
    EvalReport report;
};

std::vector<AblationRow> run_ablation(const ToyConfig &base);

} // namespace toggl::toy
