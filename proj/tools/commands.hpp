#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace togglcli {

struct MixArgs {
    std::string manifest;
    int n_mix = 2;
    std::size_t count = 100;
    uint64_t seed = 1234;
    std::string out_dir;
};
void cmd_mix(const MixArgs &args);

struct SerializeArgs {
    std::string input;
    std::string out_dir;
};
void cmd_serialize(const SerializeArgs &args);

struct DeserializeArgs {
    std::string input;
    std::string out_dir;
    bool strict = false;
};
void cmd_deserialize(const DeserializeArgs &args);

struct ScoreArgs {
    std::string refs;
    std::string hyps;
    std::string out_dir;
    int oracle_k = 0;       // 0 = off
    std::string buckets;    // "", "default", or comma-separated percents
    bool strict_decode = false;
    bool fixed_order = false;
};
void cmd_score(const ScoreArgs &args);

struct TrainArgs {
    std::string config; // empty = defaults
    std::vector<std::string> overrides;
    std::string out_dir;
};
void cmd_train(const TrainArgs &args);

struct EvalArgs {
    std::string checkpoint;
    std::string config;
    std::vector<std::string> overrides;
    std::string out_dir;
};
void cmd_eval(const EvalArgs &args);

struct AblateArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string out_dir;
};
void cmd_ablate(const AblateArgs &args);

struct CtcCheckArgs {
    int frames = 0;
    std::string target; // space-separated tokens
    int duplication = 1;
    std::string dump_lattice; // path, empty = off
};
void cmd_ctc_check(const CtcCheckArgs &args);

} // namespace togglcli
