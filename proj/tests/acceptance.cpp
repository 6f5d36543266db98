// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Training-based checks run the library directly; the ablation check
// drives the CLI binary (TOGGL_BIN or argv[1]).
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "toggl/config.hpp"
#include "toggl/ctc.hpp"
#include "toggl/error.hpp"
#include "toggl/mixture.hpp"
#include "toggl/rng.hpp"
#include "toggl/scoring.hpp"
#include "toggl/stagger_codec.hpp"
#include "toggl/toy_model.hpp"
#include "toggl/toy_train.hpp"

using namespace toggl;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<Criterion> g_results;

void record(const std::string &name, bool pass, const std::string &detail) {
    g_results.push_back({name, pass, detail});
    std::printf("[%s] %-28s %s\n", pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string fmt(const char *pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return buf;
}

// --- 1. codec round trip ----------------------------------------------------

void check_codec_round_trip() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(790532);
    std::size_t failures = 0;
    const int iterations = 10000;
    for (int iter = 0; iter < iterations; ++iter) {
        const auto transcripts = oracle::random_transcripts(rng, 4, 50);
        const auto order = order_speakers(transcripts);
        const auto stream = serialize(transcripts, order);
        const auto decoded = deserialize(stream, DecodeMode::strict);
        std::size_t decoded_keys = 0;
        for (std::size_t k = 0; k < order.ordering.size(); ++k) {
            const auto &tokens = transcripts[order.ordering[k]].tokens;
            const auto it = decoded.find(static_cast<int>(k));
            if (it == decoded.end()) {
                ++failures;
                continue;
            }
            ++decoded_keys;
            if (it->second.size() != tokens.size()) {
                ++failures;
                continue;
            }
            for (std::size_t i = 0; i < tokens.size(); ++i)
                if (it->second[i] != tokens[i].text) {
                    ++failures;
                    break;
                }
        }
        if (decoded.size() != decoded_keys)
            ++failures;
    }
    const double elapsed = seconds_since(t0);
    record("codec_round_trip", failures == 0 && elapsed < 10.0,
           fmt("%d sets, %zu failures, %.2f s", iterations, failures, elapsed));
}

// --- 2. CTC oracle equivalence ----------------------------------------------

void check_ctc_oracle() {
    Rng rng(282282);
    int checked = 0;
    double worst = 0.0;
    bool ok = true;
    while (checked < 1000) {
        const std::size_t frames = 1 + rng.uniform_int(6);
        const std::size_t vocab = 2 + rng.uniform_int(2); // includes blank
        ctc::FrameProbs probs;
        probs.frames = frames;
        probs.vocab = vocab;
        probs.p.resize(frames * vocab);
        for (std::size_t t = 0; t < frames; ++t) {
            double sum = 0.0;
            for (std::size_t v = 0; v < vocab; ++v) {
                probs.at(t, v) = 0.05 + rng.uniform();
                sum += probs.at(t, v);
            }
            for (std::size_t v = 0; v < vocab; ++v)
                probs.at(t, v) /= sum;
        }
        ctc::Target target;
        const std::size_t len = rng.uniform_int(4);
        for (std::size_t i = 0; i < len; ++i)
            target.labels.push_back(
                1 + static_cast<int>(rng.uniform_int(vocab - 1)));
        if (!ctc::feasible(frames, target))
            continue;

        std::vector<std::vector<double>> rows(frames,
                                              std::vector<double>(vocab));
        for (std::size_t t = 0; t < frames; ++t)
            for (std::size_t v = 0; v < vocab; ++v)
                rows[t][v] = probs.at(t, v);
        const double brute = oracle::ctc_brute_force(rows, target.labels);
        const double got = ctc::forward_logprob(probs, target);
        const double diff = std::abs(got - std::log(brute));
        worst = std::max(worst, diff);
        if (diff > 1e-10)
            ok = false;
        ++checked;
    }
    record("ctc_oracle_equivalence", ok,
           fmt("1000 grids, worst |log diff| %.2e", worst));
}

// --- 3. CTC feasibility via duplication --------------------------------------

void check_ctc_feasibility() {
    bool ok = true;
    // adjacent repeats force a separating blank
    const ctc::Target repeat{{2, 2}};
    ok &= !ctc::feasible(2, repeat);
    ok &= ctc::feasible(2 * 2, repeat);
    // token count exceeding the frame count
    const ctc::Target dense{{1, 2, 3, 1, 2}};
    ok &= !ctc::feasible(3, dense);
    ok &= ctc::feasible(3 * 2, dense);
    // duplication preserves row content
    Mat frames(3, 2);
    for (std::size_t i = 0; i < frames.d.size(); ++i)
        frames.d[i] = static_cast<double>(i);
    const Mat doubled = ctc::duplicate_frames(frames, 2);
    ok &= doubled.rows == 6;
    for (std::size_t k = 0; k < doubled.rows; ++k)
        for (std::size_t c = 0; c < 2; ++c)
            ok &= doubled(k, c) == frames(k / 2, c);
    record("ctc_feasibility_enhancement", ok,
           "infeasible targets become feasible after x2 duplication");
}

// --- 4. gradient checks -------------------------------------------------------

void check_gradients() {
    toy::SyntheticTask task;
    task.vocab_size = 5;
    task.frames_per_symbol = 2;
    task.feature_dim = 4;
    task.noise_std = 0.05;
    task.max_speakers = 2;
    const toy::ModelConfig model{6, 24};

    toy::DataSpec data;
    data.min_symbols = 2;
    data.max_symbols = 3;
    data.mix_weights = {0.3, 0.7};

    Rng rng(474747);
    std::size_t checked_params = 0, failed_params = 0;
    double worst_rel = 0.0;
    const double h = 1e-5;
    for (int instance = 0; instance < 20; ++instance) {
        auto params =
            toy::ToyModelParams::init(task, model, derive_seed(17, instance));
        const auto item = toy::sample_item(task, data, model, rng);

        toy::TrainConfig cfg;
        cfg.pit_enabled = (instance % 2 == 0);
        cfg.ctc_weight = instance % 4 == 3 ? 1.0 : (instance % 4 == 2 ? 0.0 : 0.3);
        cfg.duplication_factor = 2;

        auto grads = toy::ToyModelParams::zeros_like(params);
        toy::loss(params, task, item.rendered.frames, item.permutation_targets,
                  cfg, &grads);

        auto param_tensors = params.tensors();
        auto grad_tensors = grads.tensors();
        for (std::size_t ti = 0; ti < param_tensors.size(); ++ti) {
            Mat &m = *param_tensors[ti].second;
            const Mat &g = *grad_tensors[ti].second;
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double saved = m.d[i];
                m.d[i] = saved + h;
                const double up = toy::loss(params, task, item.rendered.frames,
                                            item.permutation_targets, cfg,
                                            nullptr)
                                      .total;
                m.d[i] = saved - h;
                const double down = toy::loss(params, task, item.rendered.frames,
                                              item.permutation_targets, cfg,
                                              nullptr)
                                        .total;
                m.d[i] = saved;
                const double fd = (up - down) / (2 * h);
                const double diff = std::abs(g.d[i] - fd);
                const double scale =
                    std::max({std::abs(g.d[i]), std::abs(fd), 1e-6});
                ++checked_params;
                if (diff / scale >= 1e-4 && diff >= 1e-9) {
                    ++failed_params;
                    worst_rel = std::max(worst_rel, diff / scale);
                }
            }
        }
    }
    record("gradient_checks", failed_params == 0,
           fmt("20 instances, %zu params checked, %zu failed (worst rel %.2e)",
               checked_params, failed_params, worst_rel));
}

// --- 5. scoring oracle equivalence --------------------------------------------

std::vector<std::string> random_tokens(Rng &rng, std::size_t max_len) {
    std::vector<std::string> out(rng.uniform_int(max_len + 1));
    for (auto &t : out)
        t = std::string(1, static_cast<char>('a' + rng.uniform_int(5)));
    return out;
}

void check_scoring_oracle() {
    Rng rng(571113);
    bool ok = true;
    // pit_wer vs brute-force permutation minimum
    for (int iter = 0; iter < 1000; ++iter) {
        SpeakerSetTranscript refs, hyps;
        const std::size_t nr = 1 + rng.uniform_int(4);
        const std::size_t nh = 1 + rng.uniform_int(4);
        for (std::size_t i = 0; i < nr; ++i)
            refs.streams[static_cast<int>(i)] = random_tokens(rng, 6);
        for (std::size_t i = 0; i < nh; ++i)
            hyps.streams[static_cast<int>(i)] = random_tokens(rng, 6);

        std::vector<const std::vector<std::string> *> r, h;
        static const std::vector<std::string> empty;
        for (const auto &[_, s] : refs.streams)
            r.push_back(&s);
        for (const auto &[_, s] : hyps.streams)
            h.push_back(&s);
        const std::size_t n = std::max(r.size(), h.size());
        while (r.size() < n)
            r.push_back(&empty);
        while (h.size() < n)
            h.push_back(&empty);
        std::vector<std::vector<std::size_t>> cost(n,
                                                   std::vector<std::size_t>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                cost[i][j] = oracle::levenshtein(*r[j], *h[i]);
        if (pit_wer(refs, hyps).errors() != oracle::assignment_brute_force(cost))
            ok = false;
    }
    record("scoring_pit_oracle", ok, "1000 random cases vs permutation minimum");

    // oracle_k vs brute-force subset minimum, k=2 over 3 references
    bool ok2 = true;
    for (int iter = 0; iter < 1000; ++iter) {
        SpeakerSetTranscript refs, hyps;
        for (int s = 0; s < 3; ++s)
            refs.streams[s] = random_tokens(rng, 5);
        const std::size_t nh = rng.uniform_int(3);
        for (std::size_t s = 0; s < nh; ++s)
            hyps.streams[static_cast<int>(s)] = random_tokens(rng, 5);
        const auto got = oracle_k_wer(refs, hyps, 2);

        bool have = false;
        double best_wer = 0.0;
        std::size_t best_err = 0;
        for (int drop = 0; drop < 3; ++drop) {
            SpeakerSetTranscript subset;
            for (int s = 0; s < 3; ++s)
                if (s != drop)
                    subset.streams[s] = refs.streams[s];
            const auto r = pit_wer(subset, hyps);
            const bool better =
                !have || r.wer < best_wer ||
                (r.wer == best_wer && r.errors() < best_err);
            if (better) {
                best_wer = r.wer;
                best_err = r.errors();
                have = true;
            }
        }
        if (got.errors() != best_err)
            ok2 = false;
        if (std::isfinite(got.wer) != std::isfinite(best_wer))
            ok2 = false;
        else if (std::isfinite(got.wer) && std::abs(got.wer - best_wer) > 1e-12)
            ok2 = false;
    }
    record("scoring_oracle_k", ok2, "1000 subset cases, k=2 over 3 speakers");
}

// --- 6. mixing protocol --------------------------------------------------------

void check_mixing_protocol() {
    // varied-duration synthetic sources so that every overlap bucket fills
    std::vector<Waveform> pool;
    const double durations[] = {0.35, 0.5, 0.8, 1.1, 1.6, 2.0};
    int idx = 0;
    for (double d : durations) {
        Waveform w;
        w.sample_rate = 8000;
        const std::size_t n = static_cast<std::size_t>(d * 8000);
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            w.samples[i] = static_cast<float>(
                0.4 * std::sin(2.0 * 3.14159265 * (180 + 60 * idx) * i / 8000.0));
        pool.push_back(std::move(w));
        ++idx;
    }

    Rng rng(161616);
    bool bounds_ok = true, gains_ok = true, rms_ok = true;
    std::array<std::size_t, 5> buckets{};
    double worst_rms_rel = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const auto &a = pool[rng.uniform_int(pool.size())];
        const auto &b = pool[rng.uniform_int(pool.size())];
        const std::vector<double> durs{a.duration_s(), b.duration_s()};
        const auto spec = sample_mix_spec(durs, derive_seed(0xF00D, i));
        if (spec.offsets_s[1] < 0.0 || spec.offsets_s[1] > 0.9 * durs[0])
            bounds_ok = false;
        if (spec.gains_db[1] < -3.0 || spec.gains_db[1] > 3.0)
            gains_ok = false;

        const auto record_ = mix(std::vector<Waveform>{a, b}, spec);
        double acc0 = 0.0, accm = 0.0;
        for (float s : a.samples)
            acc0 += static_cast<double>(s) * s;
        for (float s : record_.mixture.samples)
            accm += static_cast<double>(s) * s;
        const double rms0 = std::sqrt(acc0 / a.samples.size());
        const double rmsm = std::sqrt(accm / record_.mixture.samples.size());
        const double rel = std::abs(rmsm - rms0) / rms0;
        worst_rms_rel = std::max(worst_rms_rel, rel);
        if (rel > 1e-6)
            rms_ok = false;

        const double f = record_.overlap_fraction;
        const int b_idx = f >= 1.0 ? 4 : static_cast<int>(f * 5.0);
        ++buckets[static_cast<std::size_t>(std::min(4, std::max(0, b_idx)))];
    }
    bool buckets_ok = true;
    std::string bucket_counts;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        if (buckets[b] == 0)
            buckets_ok = false;
        bucket_counts += (b ? "/" : "") + std::to_string(buckets[b]);
    }
    record("mixing_protocol", bounds_ok && gains_ok && rms_ok && buckets_ok,
           fmt("%d draws, worst RMS rel %.1e, buckets %s", draws, worst_rms_rel,
               bucket_counts.c_str()));
}

// --- 7+8. toy mechanism and generalization ------------------------------------

void check_toy_mechanism_and_generalization() {
    const auto t0 = std::chrono::steady_clock::now();
    const toy::ToyConfig config = toy::default_config();

    // model trained on the default 1-mix + 2-mix blend
    const auto mixed = toy::train(config.task, config.model, config.data,
                                  config.train);

    // same budget, 1-mix-only data
    toy::ToyConfig solo = config;
    solo.data.mix_weights = {1.0};
    solo.train.duplication_factor = 1;
    const auto onemix = toy::train(solo.task, solo.model, solo.data, solo.train);

    toy::EvalConfig eval = config.eval;
    eval.conditions = {1, 2, 3};
    const auto mixed_report =
        toy::evaluate(mixed.params, config.task, config.data, eval);
    toy::EvalConfig eval1 = config.eval;
    eval1.conditions = {1};
    const auto solo_report =
        toy::evaluate(onemix.params, solo.task, solo.data, eval1);

    const auto &c1 = mixed_report.conditions[0];
    const auto &c2 = mixed_report.conditions[1];
    const auto &c3 = mixed_report.conditions[2];
    const auto &s1 = solo_report.conditions[0];

    const double elapsed = seconds_since(t0);
    const bool exact_ok = c2.exact_match_rate >= 0.90;
    const bool onemix_ok = c1.wer <= s1.wer + 0.02;
    const bool time_ok = elapsed < 600.0;
    record("toy_mechanism", exact_ok && onemix_ok && time_ok,
           fmt("2-mix exact %.1f%% (need >=90), 1-mix WER %.2f%% vs 1-mix-only "
               "%.2f%% (slack 2pts), %.0f s (budget 600)",
               100.0 * c2.exact_match_rate, 100.0 * c1.wer, 100.0 * s1.wer,
               elapsed));

    const bool gen_ok = c3.wer < c3.baseline_wer;
    record("generalization_3mix", gen_ok,
           fmt("staggered PIT-WER %.2f%% vs no-toggle oracle-1 %.2f%%",
               100.0 * c3.wer, 100.0 * c3.baseline_wer));
}

// --- 9. ablation harness through the CLI -----------------------------------------

constexpr int kAblateSteps = 9000;

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string &tool, const std::string &args) {
    const std::string cmd = tool + " " + args + " 2>&1";
    FILE *pipe = popen(cmd.c_str(), "r");
    RunResult result;
    if (pipe == nullptr)
        return result;
    std::array<char, 4096> buf;
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe))
        result.output.append(buf.data(), n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

void check_ablation(const std::string &tool) {
    const fs::path out_dir = fs::temp_directory_path() / "toggl_acceptance_ablate";
    fs::remove_all(out_dir);
    fs::create_directories(out_dir);

    // operating point where the token rate presses against the frame rate,
    // the regime the duplication enhancement exists for
    const std::string args =
        "ablate --set task.frames_per_symbol=2 --set train.ctc_weight=0.7"
        " --set train.steps=" + std::to_string(kAblateSteps) +
        " --set eval.items_per_condition=120 --out-dir " + out_dir.string();
    const auto result = run_cli(tool, args);
    if (result.exit_code != 0) {
        record("ablation_harness", false,
               fmt("cmd_ablate exited %d", result.exit_code));
        return;
    }

    std::ifstream in(out_dir / "ablation.json");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("rows") || j["rows"].size() != 5) {
        record("ablation_harness", false, "ablation.json missing or not 5 rows");
        return;
    }
    double parent_2mix = -1.0, no_enh_2mix = -1.0;
    std::vector<std::string> labels;
    for (const auto &row : j["rows"]) {
        labels.push_back(row.at("label").get<std::string>());
        for (const auto &cond : row.at("conditions"))
            if (cond.at("n_mix").get<int>() == 2) {
                const double wer = cond.at("wer").is_null()
                                       ? 1e9
                                       : cond.at("wer").get<double>();
                if (labels.back() == "- pit_finetune")
                    parent_2mix = wer;
                if (labels.back() == "-- ctc_enhancement")
                    no_enh_2mix = wer;
            }
    }
    const bool structure_ok =
        labels == std::vector<std::string>{"toggl", "- pit_finetune",
                                           "-- ctc_enhancement", "-- ctc",
                                           "--- 3mix_data"};
    const bool direction_ok =
        parent_2mix >= 0 && no_enh_2mix >= 0 && no_enh_2mix > parent_2mix;
    record("ablation_harness", structure_ok && direction_ok,
           fmt("5 rows %s; -ctc_enhancement 2-mix %.2f%% vs parent %.2f%%",
               structure_ok ? "ok" : "WRONG", 100.0 * no_enh_2mix,
               100.0 * parent_2mix));
}

} // namespace

int main(int argc, char **argv) {
    std::string tool;
    if (argc > 1)
        tool = argv[1];
    else if (const char *env = std::getenv("TOGGL_BIN"))
        tool = env;

    check_codec_round_trip();
    check_ctc_oracle();
    check_ctc_feasibility();
    check_gradients();
    check_scoring_oracle();
    check_mixing_protocol();
    check_toy_mechanism_and_generalization();
    if (tool.empty())
        record("ablation_harness", false,
               "no CLI binary (set TOGGL_BIN or pass as argv[1])");
    else
        check_ablation(tool);

    int failures = 0;
    for (const auto &criterion : g_results)
        failures += criterion.pass ? 0 : 1;
    std::printf("%zu checks, %d failed\n", g_results.size(), failures);
    return failures;
}
