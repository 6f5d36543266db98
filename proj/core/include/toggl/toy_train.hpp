#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toggl/rng.hpp"
#include "toggl/scoring.hpp"
#include "toggl/toy_model.hpp"

namespace toggl::toy {

// On-the-fly synthetic dataset: each item draws a speaker count from
// mix_weights, per-speaker symbol sequences, and chained frame offsets
// mirroring the audio mixing protocol (0..90% of the previous speaker's
// length).
struct DataSpec {
    int min_symbols = 3;
    int max_symbols = 6;
    std::vector<double> mix_weights = {0.5, 0.5, 0.0}; // P(n_mix = index+1)
    double offset_max_frac = 0.9;

    void validate(const SyntheticTask &task) const;
};

struct ToyItem {
    RenderedItem rendered;
    std::vector<PermutationTarget> permutation_targets;
    int n_mix = 1;
};

// Pure function of the rng state; items whose targets would exceed
// max_target_len are re-drawn.
ToyItem sample_item(const SyntheticTask &task, const DataSpec &data,
                    const ModelConfig &model, Rng &rng, int forced_n_mix = 0);

struct TrainLogEntry {
    int step = 0;
    double loss = 0.0;
    double att_loss = 0.0;
    double ctc_loss = 0.0;
    std::size_t perm_index = 0;
    std::size_t ctc_skipped = 0; // items in the batch with infeasible CTC
};

struct TrainResult {
    ToyModelParams params;
    std::vector<TrainLogEntry> log;
};

// Plain gradient descent with a fixed step over on-the-fly batches.
// Deterministic given config.seed; throws NumericError with the step index if
// the loss goes non-finite.
TrainResult train(const SyntheticTask &task, const ModelConfig &model,
                  const DataSpec &data, const TrainConfig &config);

struct EvalConfig {
    std::vector<int> conditions = {1, 2, 3}; // n-mix test sets
    std::size_t items_per_condition = 200;
    uint64_t seed = 99;

    void validate(const SyntheticTask &task) const;
};

struct ConditionReport {
    int n_mix = 0;
    std::size_t items = 0;
    // staggered decoding scored against all speakers
    EditCounts counts;
    std::size_t ref_words = 0;
    double wer = 0.0;
    double exact_match_rate = 0.0;
    double avg_control_tokens = 0.0;
    double truncation_rate = 0.0;
    // same model constrained to a single stream, oracle-1 scored
    EditCounts baseline_counts;
    std::size_t baseline_ref_words = 0;
    double baseline_wer = 0.0;
};

struct EvalReport {
    std::vector<ConditionReport> conditions;
};

EvalReport evaluate(const ToyModelParams &params, const SyntheticTask &task,
                    const DataSpec &data, const EvalConfig &config);

} // namespace toggl::toy
