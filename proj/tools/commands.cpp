#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "tables.hpp"
#include "toggl/config.hpp"
#include "toggl/ctc.hpp"
#include "toggl/error.hpp"
#include "toggl/manifest.hpp"
#include "toggl/mixture.hpp"
#include "toggl/scoring.hpp"
#include "toggl/stagger_codec.hpp"
#include "toggl/toy_model.hpp"
#include "toggl/toy_train.hpp"

namespace togglcli {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace toggl;

namespace {

std::string resolve_out_dir(const std::string &flag_value) {
    std::string dir = flag_value;
    if (dir.empty()) {
        const char *env = std::getenv("TOGGL_OUT_DIR");
        if (env != nullptr)
            dir = env;
    }
    if (dir.empty())
        throw ConfigError("no --out-dir given and TOGGL_OUT_DIR is unset");
    fs::create_directories(dir);
    return dir;
}

toy::ToyConfig resolve_config(const std::string &path,
                              const std::vector<std::string> &overrides) {
    toy::ToyConfig config =
        path.empty() ? toy::default_config() : toy::load_config(path);
    for (const auto &entry : overrides) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + entry + "'");
        toy::apply_override(config, entry.substr(0, eq), entry.substr(eq + 1));
    }
    config.validate();
    return config;
}

json wer_json(double wer) {
    // non-finite WER (empty reference with errors) serializes as null
    if (!std::isfinite(wer))
        return nullptr;
    return wer;
}

json condition_json(const toy::ConditionReport &cond) {
    return {{"n_mix", cond.n_mix},
            {"items", cond.items},
            {"substitutions", cond.counts.substitutions},
            {"insertions", cond.counts.insertions},
            {"deletions", cond.counts.deletions},
            {"ref_words", cond.ref_words},
            {"wer", wer_json(cond.wer)},
            {"exact_match_rate", cond.exact_match_rate},
            {"avg_control_tokens", cond.avg_control_tokens},
            {"truncation_rate", cond.truncation_rate},
            {"baseline_oracle1",
             {{"substitutions", cond.baseline_counts.substitutions},
              {"insertions", cond.baseline_counts.insertions},
              {"deletions", cond.baseline_counts.deletions},
              {"ref_words", cond.baseline_ref_words},
              {"wer", wer_json(cond.baseline_wer)}}}};
}

Table eval_table(const toy::EvalReport &report) {
    Table table;
    table.header = {"model"};
    for (const auto &cond : report.conditions)
        table.header.push_back(std::to_string(cond.n_mix) + "-mix");
    std::vector<std::string> toggl_row{"toggl"};
    std::vector<std::string> baseline_row{"no_toggle (oracle-1)*"};
    for (const auto &cond : report.conditions) {
        toggl_row.push_back(format_pct(cond.wer));
        baseline_row.push_back(format_pct(cond.baseline_wer));
    }
    table.rows = {toggl_row, baseline_row};
    return table;
}

void write_eval_report(const std::string &out_dir, const std::string &stem,
                       const toy::EvalReport &report) {
    json j;
    j["conditions"] = json::array();
    for (const auto &cond : report.conditions)
        j["conditions"].push_back(condition_json(cond));
    write_text_file(out_dir + "/" + stem + ".json", j.dump(2) + "\n");
    const Table table = eval_table(report);
    write_text_file(out_dir + "/" + stem + ".tsv", to_tsv(table));
    std::cout << to_aligned(table);
}

} // namespace

// ---------------------------------------------------------------------------

void cmd_mix(const MixArgs &args) {
    const std::string out_dir = resolve_out_dir(args.out_dir);
    const auto corpus = read_source_manifest(args.manifest);
    for (const auto &rec : corpus)
        if (rec.wav_path.empty())
            throw DataError("source '" + rec.id + "' has no wav_path");

    const auto entries =
        synthesize_dataset(corpus, args.n_mix, args.count, args.seed, out_dir);
    write_mixture_manifest(out_dir + "/mixtures.jsonl", entries);

    std::vector<std::size_t> bucket_counts(5, 0);
    std::size_t clipped = 0;
    for (const auto &entry : entries) {
        const double f = entry.overlap_fraction;
        const std::size_t b = std::min<std::size_t>(
            4, static_cast<std::size_t>(f * 5.0 < 5.0 ? f * 5.0 : 4.0));
        ++bucket_counts[b];
        clipped += entry.clipped_samples;
    }

    Table table;
    table.header = {"mixtures", "0-20", "20-40", "40-60", "60-80", "80-100",
                    "clipped_samples"};
    std::vector<std::string> row{std::to_string(entries.size())};
    for (std::size_t c : bucket_counts)
        row.push_back(std::to_string(c));
    row.push_back(std::to_string(clipped));
    table.rows = {row};
    std::cout << "wrote " << out_dir << "/mixtures.jsonl\n" << to_aligned(table);
}

void cmd_serialize(const SerializeArgs &args) {
    const std::string out_dir = resolve_out_dir(args.out_dir);
    const auto records = read_source_manifest(args.input);

    // group records by utterance id, first-seen order
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::vector<const SourceUtterance *>> groups;
    for (const auto &rec : records) {
        if (groups.find(rec.id) == groups.end())
            ids.push_back(rec.id);
        groups[rec.id].push_back(&rec);
    }

    std::ofstream out(out_dir + "/streams.jsonl", std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + out_dir + "/streams.jsonl");
    for (const auto &id : ids) {
        std::vector<TimedTranscript> transcripts;
        for (const auto *rec : groups[id]) {
            TimedTranscript t;
            t.speaker_id = rec->speaker;
            t.tokens = rec->tokens;
            transcripts.push_back(std::move(t));
        }
        const auto order = order_speakers(transcripts);
        const auto stream = serialize(transcripts, order);
        json j;
        j["id"] = id;
        json speakers = json::array();
        for (std::size_t pos : order.ordering)
            speakers.push_back(transcripts[pos].speaker_id);
        j["speaker_order"] = speakers;
        j["toggl"] = to_text(stream);
        out << j.dump() << '\n';
    }
    std::cout << "wrote " << out_dir << "/streams.jsonl (" << ids.size()
              << " utterances)\n";
}

void cmd_deserialize(const DeserializeArgs &args) {
    const std::string out_dir = resolve_out_dir(args.out_dir);
    const auto records = read_scoring_manifest(
        args.input, args.strict ? DecodeMode::strict : DecodeMode::lenient);

    std::ofstream out(out_dir + "/decoded.jsonl", std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + out_dir + "/decoded.jsonl");
    for (const auto &rec : records) {
        json streams = json::object();
        for (const auto &[idx, tokens] : rec.streams.streams)
            streams[std::to_string(idx)] = tokens;
        json j;
        j["id"] = rec.id;
        j["streams"] = streams;
        out << j.dump() << '\n';
    }
    std::cout << "wrote " << out_dir << "/decoded.jsonl (" << records.size()
              << " utterances)\n";
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> parse_bucket_edges(const std::string &spec) {
    if (spec == "default")
        return {kDefaultBucketEdges.begin(), kDefaultBucketEdges.end()};
    std::vector<double> edges;
    std::stringstream ss(spec);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            edges.push_back(std::stod(cell) / 100.0);
        } catch (const std::exception &) {
            throw ConfigError("bad bucket edge '" + cell + "' in --buckets");
        }
    }
    if (edges.size() < 2)
        throw ConfigError("--buckets needs at least two comma-separated edges");
    return edges;
}

} // namespace

void cmd_score(const ScoreArgs &args) {
    const std::string out_dir = resolve_out_dir(args.out_dir);
    const DecodeMode mode =
        args.strict_decode ? DecodeMode::strict : DecodeMode::lenient;
    if (args.oracle_k > 0 && args.fixed_order)
        throw ConfigError("--oracle-k and --fixed-order are mutually exclusive");

    const auto ref_records = read_scoring_manifest(args.refs, mode);
    const auto hyp_records = read_scoring_manifest(args.hyps, mode);

    std::map<std::string, const ScoringRecord *> hyp_by_id;
    for (const auto &rec : hyp_records)
        hyp_by_id[rec.id] = &rec;
    std::map<std::string, const ScoringRecord *> ref_by_id;
    for (const auto &rec : ref_records)
        ref_by_id[rec.id] = &rec;

    std::vector<std::string> missing;
    for (const auto &rec : ref_records)
        if (hyp_by_id.find(rec.id) == hyp_by_id.end())
            missing.push_back("hyp:" + rec.id);
    for (const auto &rec : hyp_records)
        if (ref_by_id.find(rec.id) == ref_by_id.end())
            missing.push_back("ref:" + rec.id);
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i)
            list += (i ? ", " : "") + missing[i];
        if (missing.size() > 10)
            list += ", ...";
        throw DataError("id mismatch between manifests, missing: " + list);
    }

    std::vector<double> edges;
    if (!args.buckets.empty()) {
        edges = parse_bucket_edges(args.buckets);
        std::vector<std::string> without_fraction;
        for (const auto &rec : ref_records)
            if (!rec.overlap_fraction.has_value())
                without_fraction.push_back(rec.id);
        if (!without_fraction.empty())
            throw DataError("--buckets needs overlap_fraction on every reference "
                            "record; missing on '" +
                            without_fraction.front() + "' and " +
                            std::to_string(without_fraction.size() - 1) + " more");
    }

    EditCounts corpus_counts;
    std::size_t corpus_words = 0;
    std::vector<UtteranceScore> utterance_scores;
    json per_utterance = json::array();
    for (const auto &rec : ref_records) {
        const auto &hyp = *hyp_by_id.at(rec.id);
        SpeakerSetTranscript refs{rec.streams.streams};
        SpeakerSetTranscript hyps{hyp.streams.streams};
        if (refs.streams.empty())
            throw DataError("reference '" + rec.id + "' has no streams");

        ScoreReport report;
        if (args.oracle_k > 0)
            report = oracle_k_wer(refs, hyps, args.oracle_k);
        else if (args.fixed_order)
            report = fixed_order_wer(refs, hyps);
        else
            report = pit_wer(refs, hyps);

        const EditCounts counts{report.substitutions, report.insertions,
                                report.deletions};
        corpus_counts += counts;
        corpus_words += report.ref_word_count;
        if (!edges.empty())
            utterance_scores.push_back(
                {counts, report.ref_word_count, rec.overlap_fraction.value()});

        json u;
        u["id"] = rec.id;
        u["substitutions"] = report.substitutions;
        u["insertions"] = report.insertions;
        u["deletions"] = report.deletions;
        u["ref_words"] = report.ref_word_count;
        u["wer"] = wer_json(report.wer);
        json assignment = json::object();
        for (const auto &[hyp_idx, ref_idx] : report.assignment)
            assignment[std::to_string(hyp_idx)] =
                ref_idx.has_value() ? json(*ref_idx) : json(nullptr);
        u["assignment"] = assignment;
        if (report.oracle)
            u["selected_refs"] = report.selected_refs;
        per_utterance.push_back(std::move(u));
    }

    const double corpus_wer =
        corpus_words > 0
            ? static_cast<double>(corpus_counts.total()) / corpus_words
            : (corpus_counts.total() > 0
                   ? std::numeric_limits<double>::infinity()
                   : 0.0);

    json report_json;
    report_json["mode"] = args.oracle_k > 0    ? "oracle_k"
                          : args.fixed_order ? "fixed_order"
                                             : "pit";
    if (args.oracle_k > 0) {
        report_json["oracle"] = true;
        report_json["oracle_k"] = args.oracle_k;
    }
    report_json["corpus"] = {{"utterances", ref_records.size()},
                             {"substitutions", corpus_counts.substitutions},
                             {"insertions", corpus_counts.insertions},
                             {"deletions", corpus_counts.deletions},
                             {"ref_words", corpus_words},
                             {"wer", wer_json(corpus_wer)}};
    report_json["per_utterance"] = per_utterance;

    Table corpus_table;
    corpus_table.header = {"utterances", "ref_words", "sub",
                           "ins",        "del",       "wer_pct"};
    corpus_table.rows = {{std::to_string(ref_records.size()),
                          std::to_string(corpus_words),
                          std::to_string(corpus_counts.substitutions),
                          std::to_string(corpus_counts.insertions),
                          std::to_string(corpus_counts.deletions),
                          format_pct(corpus_wer)}};
    std::cout << to_aligned(corpus_table);

    if (!edges.empty()) {
        const auto rows = bucket_report(utterance_scores, edges);
        json buckets = json::array();
        Table bucket_table;
        bucket_table.header = {"overlap_pct", "utterances", "ref_words", "wer_pct"};
        for (const auto &row : rows) {
            char label[32];
            std::snprintf(label, sizeof(label), "%g-%g", row.lo * 100.0,
                          row.hi * 100.0);
            buckets.push_back({{"lo_pct", row.lo * 100.0},
                               {"hi_pct", row.hi * 100.0},
                               {"utterances", row.utterances},
                               {"substitutions", row.counts.substitutions},
                               {"insertions", row.counts.insertions},
                               {"deletions", row.counts.deletions},
                               {"ref_words", row.ref_words},
                               {"wer", wer_json(row.wer)}});
            bucket_table.rows.push_back({label, std::to_string(row.utterances),
                                         std::to_string(row.ref_words),
                                         format_pct(row.wer)});
        }
        report_json["buckets"] = buckets;
        write_text_file(out_dir + "/buckets.tsv", to_tsv(bucket_table));
        std::cout << to_aligned(bucket_table);
    }

    write_text_file(out_dir + "/report.json", report_json.dump(2) + "\n");
    write_text_file(out_dir + "/report.tsv", to_tsv(corpus_table));
}

// ---------------------------------------------------------------------------

void cmd_train(const TrainArgs &args) {
    const std::string out_dir = resolve_out_dir(args.out_dir);
    const toy::ToyConfig config = resolve_config(args.config, args.overrides);

    const auto result =
        toy::train(config.task, config.model, config.data, config.train);

    toy::save_config(out_dir + "/config.json", config);
    toy::save_checkpoint(out_dir + "/checkpoint.bin", result.params, config.task,
                         toy::config_hash(config));

    std::ofstream log(out_dir + "/train_log.jsonl", std::ios::trunc);
    if (!log)
        throw DataError("cannot write " + out_dir + "/train_log.jsonl");
    for (const auto &entry : result.log) {
        json j;
        j["step"] = entry.step;
        j["loss"] = entry.loss;
        j["att_loss"] = entry.att_loss;
        j["ctc_loss"] = entry.ctc_loss;
        j["perm_index"] = entry.perm_index;
        j["ctc_skipped"] = entry.ctc_skipped;
        log << j.dump() << '\n';
    }

    std::cout << "trained " << config.train.steps << " steps";
    if (!result.log.empty())
        std::cout << ", final loss " << result.log.back().loss;
    std::cout << "\nwrote " << out_dir << "/checkpoint.bin\n";
}

void cmd_eval(const EvalArgs &args) {
    const std::string out_dir = resolve_out_dir(args.out_dir);
    const toy::ToyConfig config = resolve_config(args.config, args.overrides);
    const auto ckpt = toy::load_checkpoint(args.checkpoint);

    const auto report =
        toy::evaluate(ckpt.params, ckpt.task, config.data, config.eval);
    write_eval_report(out_dir, "eval_report", report);
}

void cmd_ablate(const AblateArgs &args) {
    const std::string out_dir = resolve_out_dir(args.out_dir);
    const toy::ToyConfig base = resolve_config(args.config, args.overrides);

    const auto rows = toy::run_ablation(base);

    json j;
    j["rows"] = json::array();
    Table table;
    table.header = {"model", "1-mix", "2-mix"};
    for (const auto &row : rows) {
        json conditions = json::array();
        for (const auto &cond : row.report.conditions)
            conditions.push_back(condition_json(cond));
        j["rows"].push_back({{"label", row.label},
                             {"config_hash", toy::config_hash(row.config)},
                             {"pit_enabled", row.config.train.pit_enabled},
                             {"ctc_weight", row.config.train.ctc_weight},
                             {"duplication_factor",
                              row.config.train.duplication_factor},
                             {"mix_weights", row.config.data.mix_weights},
                             {"conditions", conditions}});
        std::vector<std::string> cells{row.label};
        for (const auto &cond : row.report.conditions)
            cells.push_back(format_pct(cond.wer));
        table.rows.push_back(cells);
    }
    write_text_file(out_dir + "/ablation.json", j.dump(2) + "\n");
    write_text_file(out_dir + "/ablation.tsv", to_tsv(table));
    std::cout << to_aligned(table);
}

// ---------------------------------------------------------------------------

void cmd_ctc_check(const CtcCheckArgs &args) {
    if (args.frames < 1)
        throw ConfigError("--frames must be >= 1");
    if (args.duplication < 1)
        throw ConfigError("--duplication must be >= 1");

    const TogglStream stream = stream_from_text(args.target);
    std::map<std::string, int> vocab;
    for (const auto &token : strip_control_tokens(stream))
        if (vocab.find(token) == vocab.end()) {
            const int id = static_cast<int>(vocab.size()) + 1;
            vocab[token] = id;
        }
    const ctc::Target target = ctc::make_target(stream, vocab);

    const std::size_t need = ctc::min_alignment_frames(target);
    const std::size_t frames = static_cast<std::size_t>(args.frames);
    const std::size_t dup_frames = frames * args.duplication;
    std::cout << "target: " << target.labels.size() << " labels ("
              << vocab.size() << " unique), min alignment frames: " << need
              << "\n";
    std::cout << "frames " << frames << ": "
              << (ctc::feasible(frames, target) ? "feasible" : "infeasible")
              << "\n";
    if (args.duplication > 1)
        std::cout << "frames x" << args.duplication << " = " << dup_frames
                  << ": "
                  << (ctc::feasible(dup_frames, target) ? "feasible"
                                                        : "infeasible")
                  << "\n";

    if (ctc::feasible(dup_frames, target)) {
        // uniform grid over blank + unique labels for a quick numeric probe
        ctc::FrameProbs probs;
        probs.frames = dup_frames;
        probs.vocab = vocab.size() + 1;
        probs.p.assign(probs.frames * probs.vocab, 1.0 / probs.vocab);
        std::cout << "uniform-grid log-probability: "
                  << ctc::forward_logprob(probs, target) << "\n";
        if (!args.dump_lattice.empty()) {
            write_text_file(args.dump_lattice, ctc::lattice_tsv(probs, target));
            std::cout << "wrote lattice to " << args.dump_lattice << "\n";
        }
    } else if (!args.dump_lattice.empty()) {
        throw DataError("cannot dump a lattice for an infeasible target");
    }
}

} // namespace togglcli
