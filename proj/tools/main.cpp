#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "toggl/error.hpp"

namespace {

// machine-readable error record on stderr; exit code mirrors the kind
int fail(const std::string &kind, const std::string &message, int code) {
    nlohmann::json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << j.dump() << std::endl;
    return code;
}

const char *kind_name(toggl::ErrorKind kind) {
    switch (kind) {
    case toggl::ErrorKind::config:
        return "config";
    case toggl::ErrorKind::data:
        return "data";
    case toggl::ErrorKind::numeric:
        return "numeric";
    }
    return "unknown";
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"staggered-labeling toolkit for overlapped speech "
                 "transcription: mixture synthesis, [NEXT]/[PREV] stream "
                 "codec, permutation-invariant scoring, CTC numerics, and a "
                 "synthetic-task demonstrator"};
    app.require_subcommand(1);

    togglcli::MixArgs mix;
    auto *cmd_mix = app.add_subcommand(
        "mix", "synthesize overlapping mixtures from a source manifest");
    cmd_mix->add_option("--manifest", mix.manifest, "source utterance JSONL")
        ->required();
    cmd_mix->add_option("--n-mix", mix.n_mix, "speakers per mixture (1..4)")
        ->default_val(2);
    cmd_mix->add_option("--count", mix.count, "number of mixtures")
        ->default_val(100);
    cmd_mix->add_option("--seed", mix.seed, "rng seed")->default_val(1234);
    cmd_mix->add_option("--out-dir", mix.out_dir,
                        "output directory (or TOGGL_OUT_DIR)");

    togglcli::SerializeArgs ser;
    auto *cmd_ser = app.add_subcommand(
        "serialize", "merge timed transcripts into staggered streams");
    cmd_ser->add_option("--input", ser.input, "timed-transcript JSONL")
        ->required();
    cmd_ser->add_option("--out-dir", ser.out_dir,
                        "output directory (or TOGGL_OUT_DIR)");

    togglcli::DeserializeArgs des;
    auto *cmd_des = app.add_subcommand(
        "deserialize", "split staggered streams into per-speaker sequences");
    cmd_des->add_option("--input", des.input, "stream JSONL ({id, toggl})")
        ->required();
    cmd_des->add_flag("--strict-decode", des.strict,
                      "reject speaker-index underflow instead of clamping");
    cmd_des->add_option("--out-dir", des.out_dir,
                        "output directory (or TOGGL_OUT_DIR)");

    togglcli::ScoreArgs score;
    auto *cmd_score = app.add_subcommand(
        "score", "multi-speaker WER with optimal speaker assignment");
    cmd_score->add_option("--refs", score.refs, "reference JSONL")->required();
    cmd_score->add_option("--hyps", score.hyps, "hypothesis JSONL")->required();
    cmd_score->add_option("--oracle-k", score.oracle_k,
                          "score only the best k reference speakers");
    cmd_score->add_option(
        "--buckets", score.buckets,
        "overlap buckets: 'default' or comma-separated percents");
    cmd_score->add_flag("--strict-decode", score.strict_decode,
                        "strict stream decoding for toggl-text records");
    cmd_score->add_flag("--fixed-order", score.fixed_order,
                        "identity assignment instead of the optimal one");
    cmd_score->add_option("--out-dir", score.out_dir,
                          "output directory (or TOGGL_OUT_DIR)");

    togglcli::TrainArgs train;
    auto *cmd_train =
        app.add_subcommand("train", "train the synthetic-task demonstrator");
    cmd_train->add_option("--config", train.config, "config JSON file");
    cmd_train->add_option("--set", train.overrides,
                          "config override section.key=value (repeatable)");
    cmd_train->add_option("--out-dir", train.out_dir,
                          "output directory (or TOGGL_OUT_DIR)");

    togglcli::EvalArgs eval;
    auto *cmd_eval = app.add_subcommand(
        "eval", "evaluate a checkpoint per n-mix condition");
    cmd_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint file")
        ->required();
    cmd_eval->add_option("--config", eval.config, "config JSON file");
    cmd_eval->add_option("--set", eval.overrides,
                         "config override section.key=value (repeatable)");
    cmd_eval->add_option("--out-dir", eval.out_dir,
                         "output directory (or TOGGL_OUT_DIR)");

    togglcli::AblateArgs ablate;
    auto *cmd_ablate = app.add_subcommand(
        "ablate", "train and score the ablation grid (PIT, CTC enhancement, "
                  "CTC, 3-mix data)");
    cmd_ablate->add_option("--config", ablate.config, "base config JSON file");
    cmd_ablate->add_option("--set", ablate.overrides,
                           "config override section.key=value (repeatable)");
    cmd_ablate->add_option("--out-dir", ablate.out_dir,
                           "output directory (or TOGGL_OUT_DIR)");

    togglcli::CtcCheckArgs ctc;
    auto *cmd_ctc = app.add_subcommand(
        "ctc-check", "target feasibility and forward-lattice inspection");
    cmd_ctc->add_option("--frames", ctc.frames, "encoder frame count")
        ->required();
    cmd_ctc->add_option("--target", ctc.target,
                        "space-separated target tokens (controls are stripped)")
        ->required();
    cmd_ctc->add_option("--duplication", ctc.duplication,
                        "frame duplication factor")
        ->default_val(1);
    cmd_ctc->add_option("--dump-lattice", ctc.dump_lattice,
                        "write the forward lattice TSV to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) // --help
            return app.exit(e);
        app.exit(e);
        return fail("config", e.what(), 2);
    }

    try {
        if (cmd_mix->parsed())
            togglcli::cmd_mix(mix);
        else if (cmd_ser->parsed())
            togglcli::cmd_serialize(ser);
        else if (cmd_des->parsed())
            togglcli::cmd_deserialize(des);
        else if (cmd_score->parsed())
            togglcli::cmd_score(score);
        else if (cmd_train->parsed())
            togglcli::cmd_train(train);
        else if (cmd_eval->parsed())
            togglcli::cmd_eval(eval);
        else if (cmd_ablate->parsed())
            togglcli::cmd_ablate(ablate);
        else if (cmd_ctc->parsed())
            togglcli::cmd_ctc_check(ctc);
    } catch (const toggl::Error &e) {
        return fail(kind_name(e.kind()), e.what(), static_cast<int>(e.kind()));
    } catch (const std::exception &e) {
        return fail("internal", e.what(), 4);
    }
    return 0;
}
