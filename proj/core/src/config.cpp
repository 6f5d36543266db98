#include "toggl/config.hpp"

#include <fstream>

#include <json.hpp>

#include "toggl/error.hpp"

namespace toggl::toy {

using nlohmann::json;

void ToyConfig::validate() const {
    task.validate();
    if (model.hidden_dim < 1)
        throw ConfigError("model.hidden_dim must be >= 1");
    if (model.max_target_len < 2)
        throw ConfigError("model.max_target_len must be >= 2");
    data.validate(task);
    train.validate();
    eval.validate(task);
}

ToyConfig default_config() { return ToyConfig{}; }

namespace {

json to_json(const ToyConfig &c) {
    json j;
    j["task"] = {{"vocab_size", c.task.vocab_size},
                 {"frames_per_symbol", c.task.frames_per_symbol},
                 {"feature_dim", c.task.feature_dim},
                 {"noise_std", c.task.noise_std},
                 {"max_speakers", c.task.max_speakers},
                 {"normalize_energy", c.task.normalize_energy},
                 {"embedding_seed", c.task.embedding_seed}};
    j["model"] = {{"hidden_dim", c.model.hidden_dim},
                  {"max_target_len", c.model.max_target_len}};
    j["data"] = {{"min_symbols", c.data.min_symbols},
                 {"max_symbols", c.data.max_symbols},
                 {"mix_weights", c.data.mix_weights},
                 {"offset_max_frac", c.data.offset_max_frac}};
    j["train"] = {{"ctc_weight", c.train.ctc_weight},
                  {"pit_enabled", c.train.pit_enabled},
                  {"duplication_factor", c.train.duplication_factor},
                  {"learning_rate", c.train.learning_rate},
                  {"steps", c.train.steps},
                  {"batch_size", c.train.batch_size},
                  {"seed", c.train.seed},
                  {"log_every", c.train.log_every}};
    j["eval"] = {{"conditions", c.eval.conditions},
                 {"items_per_condition", c.eval.items_per_condition},
                 {"seed", c.eval.seed}};
    return j;
}

template <typename T>
void read_key(const json &section, const char *key, T &out) {
    if (section.contains(key)) {
        try {
            out = section.at(key).get<T>();
        } catch (const json::exception &e) {
            throw ConfigError(std::string("config key '") + key + "': " + e.what());
        }
    }
}

void check_keys(const json &section, std::initializer_list<const char *> known,
                const std::string &where) {
    if (!section.is_object())
        throw ConfigError("config section '" + where + "' must be an object");
    for (auto it = section.begin(); it != section.end(); ++it) {
        bool ok = false;
        for (const char *k : known)
            if (it.key() == k)
                ok = true;
        if (!ok)
            throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
    }
}

ToyConfig from_json(const json &j, bool validate = true) {
    if (!j.is_object())
        throw ConfigError("config root must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string &k = it.key();
        if (k != "task" && k != "model" && k != "data" && k != "train" && k != "eval")
            throw ConfigError("unknown config section '" + k + "'");
    }

    ToyConfig c;
    if (j.contains("task")) {
        const auto &s = j.at("task");
        check_keys(s,
                   {"vocab_size", "frames_per_symbol", "feature_dim", "noise_std",
                    "max_speakers", "normalize_energy", "embedding_seed"},
                   "task");
        read_key(s, "vocab_size", c.task.vocab_size);
        read_key(s, "frames_per_symbol", c.task.frames_per_symbol);
        read_key(s, "feature_dim", c.task.feature_dim);
        read_key(s, "noise_std", c.task.noise_std);
        read_key(s, "max_speakers", c.task.max_speakers);
        read_key(s, "normalize_energy", c.task.normalize_energy);
        read_key(s, "embedding_seed", c.task.embedding_seed);
    }
    if (j.contains("model")) {
        const auto &s = j.at("model");
        check_keys(s, {"hidden_dim", "max_target_len"}, "model");
        read_key(s, "hidden_dim", c.model.hidden_dim);
        read_key(s, "max_target_len", c.model.max_target_len);
    }
    if (j.contains("data")) {
        const auto &s = j.at("data");
        check_keys(s, {"min_symbols", "max_symbols", "mix_weights", "offset_max_frac"},
                   "data");
        read_key(s, "min_symbols", c.data.min_symbols);
        read_key(s, "max_symbols", c.data.max_symbols);
        read_key(s, "mix_weights", c.data.mix_weights);
        read_key(s, "offset_max_frac", c.data.offset_max_frac);
    }
    if (j.contains("train")) {
        const auto &s = j.at("train");
        check_keys(s,
                   {"ctc_weight", "pit_enabled", "duplication_factor",
                    "learning_rate", "steps", "batch_size", "seed", "log_every"},
                   "train");
        read_key(s, "ctc_weight", c.train.ctc_weight);
        read_key(s, "pit_enabled", c.train.pit_enabled);
        read_key(s, "duplication_factor", c.train.duplication_factor);
        read_key(s, "learning_rate", c.train.learning_rate);
        read_key(s, "steps", c.train.steps);
        read_key(s, "batch_size", c.train.batch_size);
        read_key(s, "seed", c.train.seed);
        read_key(s, "log_every", c.train.log_every);
    }
    if (j.contains("eval")) {
        const auto &s = j.at("eval");
        check_keys(s, {"conditions", "items_per_condition", "seed"}, "eval");
        read_key(s, "conditions", c.eval.conditions);
        read_key(s, "items_per_condition", c.eval.items_per_condition);
        read_key(s, "seed", c.eval.seed);
    }
    if (validate)
        c.validate();
    return c;
}

} // namespace

ToyConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config file not found: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw ConfigError("config file is not valid JSON: " + path);
    return from_json(j);
}

std::string config_to_json(const ToyConfig &config) {
    return to_json(config).dump(2) + "\n";
}

void save_config(const std::string &path, const ToyConfig &config) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw ConfigError("cannot write config: " + path);
    out << config_to_json(config);
}

void apply_override(ToyConfig &config, const std::string &path,
                    const std::string &value) {
    const auto dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size())
        throw ConfigError("override path must be section.key, got '" + path + "'");
    const std::string section = path.substr(0, dot);
    const std::string key = path.substr(dot + 1);

    json j = to_json(config);
    if (!j.contains(section) || !j.at(section).contains(key))
        throw ConfigError("unknown config key '" + path + "'");

    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded())
        parsed = value; // bare string
    j[section][key] = parsed;
    // key checks still run; full validation happens once all overrides apply
    config = from_json(j, /*validate=*/false);
}

std::string config_hash(const ToyConfig &config) {
    const std::string dump = to_json(config).dump();
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<AblationRow> run_ablation(const ToyConfig &base) {
    base.validate();

    // full model: PIT on, CTC with duplication, up to 3-mix training data
    ToyConfig full = base;
    full.task.max_speakers = std::max(full.task.max_speakers, 3);
    full.data.mix_weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    full.train.pit_enabled = true;
    if (full.train.ctc_weight <= 0.0)
        full.train.ctc_weight = 0.3;
    full.train.duplication_factor = 3;

    ToyConfig no_pit = full;
    no_pit.train.pit_enabled = false;

    ToyConfig no_enhancement = no_pit;
    no_enhancement.train.duplication_factor = 1;

    ToyConfig no_ctc = no_pit;
    no_ctc.train.ctc_weight = 0.0;

    ToyConfig no_3mix = no_ctc;
    no_3mix.data.mix_weights = {0.5, 0.5};
    no_3mix.train.duplication_factor = 2;

    const std::vector<std::pair<std::string, ToyConfig>> grid = {
        {"toggl", full},
        {"- pit_finetune", no_pit},
        {"-- ctc_enhancement", no_enhancement},
        {"-- ctc", no_ctc},
        {"--- 3mix_data", no_3mix},
    };

    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        AblationRow row;
        row.label = grid[i].first;
        row.config = grid[i].second;
        row.config.train.seed = derive_seed(base.train.seed, i);
        row.config.eval.conditions = {1, 2};
        row.config.validate();
        const TrainResult trained = train(row.config.task, row.config.model,
                                          row.config.data, row.config.train);
        row.report = evaluate(trained.params, row.config.task, row.config.data,
                              row.config.eval);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace toggl::toy
