#include "toggl/toy_train.hpp"

#include <algorithm>
#include <cmath>

#include "toggl/error.hpp"

namespace toggl::toy {

void DataSpec::validate(const SyntheticTask &task) const {
    if (min_symbols < 1 || max_symbols < min_symbols)
        throw ConfigError("data: need 1 <= min_symbols <= max_symbols");
    if (mix_weights.empty() ||
        mix_weights.size() > static_cast<std::size_t>(task.max_speakers))
        throw ConfigError("data.mix_weights length must be 1..task.max_speakers");
    double sum = 0.0;
    for (double w : mix_weights) {
        if (w < 0.0)
            throw ConfigError("data.mix_weights must be non-negative");
        sum += w;
    }
    if (sum <= 0.0)
        throw ConfigError("data.mix_weights must not all be zero");
    if (offset_max_frac < 0.0 || offset_max_frac > 1.0)
        throw ConfigError("data.offset_max_frac must be in [0, 1]");
}

void EvalConfig::validate(const SyntheticTask &task) const {
    if (conditions.empty())
        throw ConfigError("eval.conditions must not be empty");
    for (int n : conditions)
        if (n < 1 || n > task.max_speakers)
            throw ConfigError("eval condition outside 1..task.max_speakers");
    if (items_per_condition < 1)
        throw ConfigError("eval.items_per_condition must be >= 1");
}

ToyItem sample_item(const SyntheticTask &task, const DataSpec &data,
                    const ModelConfig &model, Rng &rng, int forced_n_mix) {
    data.validate(task);
    if (forced_n_mix > task.max_speakers)
        throw ConfigError("sample_item: forced n_mix exceeds task.max_speakers");

    double weight_sum = 0.0;
    for (double w : data.mix_weights)
        weight_sum += w;

    // re-draw until the serialized target fits the decoder position table
    for (;;) {
        int n_mix = forced_n_mix;
        if (n_mix <= 0) {
            const double u = rng.uniform() * weight_sum;
            double acc = 0.0;
            n_mix = static_cast<int>(data.mix_weights.size());
            for (std::size_t i = 0; i < data.mix_weights.size(); ++i) {
                acc += data.mix_weights[i];
                if (u < acc) {
                    n_mix = static_cast<int>(i) + 1;
                    break;
                }
            }
        }

        std::vector<std::vector<int>> seqs(n_mix);
        std::vector<int> offsets(n_mix, 0);
        int prev_offset = 0, prev_len_frames = 0;
        for (int sp = 0; sp < n_mix; ++sp) {
            const int len =
                data.min_symbols +
                static_cast<int>(rng.uniform_int(
                    static_cast<uint64_t>(data.max_symbols - data.min_symbols + 1)));
            seqs[sp].resize(len);
            for (int &s : seqs[sp])
                s = static_cast<int>(rng.uniform_int(task.vocab_size));
            if (sp == 0) {
                offsets[sp] = 0;
            } else {
                const int bound = static_cast<int>(
                    std::floor(data.offset_max_frac * prev_len_frames));
                // Simultaneous symbol onsets leave per-slot attribution
                // undetermined by the summed features (a zero-probability
                // event in continuous time), so absolute offsets keep
                // distinct residues mod frames_per_symbol when possible.
                const int fps = task.frames_per_symbol;
                int offset = 0;
                for (int attempt = 0; attempt < 64; ++attempt) {
                    const int rel = static_cast<int>(
                        rng.uniform_int(static_cast<uint64_t>(bound) + 1));
                    offset = prev_offset + rel;
                    bool collides = false;
                    for (int q = 0; q < sp; ++q)
                        if (offsets[q] % fps == offset % fps)
                            collides = true;
                    if (!collides || sp >= fps || bound < fps)
                        break;
                }
                offsets[sp] = offset;
            }
            prev_offset = offsets[sp];
            prev_len_frames = len * task.frames_per_symbol;
        }

        const uint64_t noise_seed = rng.next_u64();
        ToyItem item;
        item.n_mix = n_mix;
        item.rendered = render_features(seqs, offsets, task, noise_seed);
        item.permutation_targets =
            enumerate_permutation_targets(item.rendered.transcripts,
                                          static_cast<std::size_t>(task.max_speakers));

        // one slot is reserved for EOS
        const std::size_t target_len =
            item.rendered.canonical_target.items.size() + 1;
        if (target_len <= static_cast<std::size_t>(model.max_target_len))
            return item;
    }
}

TrainResult train(const SyntheticTask &task, const ModelConfig &model,
                  const DataSpec &data, const TrainConfig &config) {
    task.validate();
    data.validate(task);
    config.validate();

    TrainResult result;
    result.params = ToyModelParams::init(task, model, derive_seed(config.seed, 0));

    Rng data_rng(derive_seed(config.seed, 1));
    ToyModelParams grads = ToyModelParams::zeros_like(result.params);

    for (int step = 0; step < config.steps; ++step) {
        for (auto &[_, m] : grads.tensors())
            m->fill(0.0);

        double loss_sum = 0.0, att_sum = 0.0, ctc_sum = 0.0;
        std::size_t perm_index = 0, skipped = 0;
        for (int b = 0; b < config.batch_size; ++b) {
            const ToyItem item = sample_item(task, data, model, data_rng);
            const LossBreakdown breakdown =
                loss(result.params, task, item.rendered.frames,
                     item.permutation_targets, config, &grads,
                     /*error_on_infeasible=*/false);
            loss_sum += breakdown.total;
            att_sum += breakdown.attention;
            ctc_sum += breakdown.ctc;
            perm_index = breakdown.perm_index;
            if (breakdown.ctc_skipped)
                ++skipped;
        }
        const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
        const double mean_loss = loss_sum * inv_batch;
        if (!std::isfinite(mean_loss))
            throw NumericError("training diverged at step " + std::to_string(step));

        const double lr = config.learning_rate * inv_batch;
        auto params_tensors = result.params.tensors();
        auto grad_tensors = grads.tensors();
        for (std::size_t i = 0; i < params_tensors.size(); ++i) {
            double *p = params_tensors[i].second->d.data();
            const double *g = grad_tensors[i].second->d.data();
            const std::size_t n = params_tensors[i].second->size();
            for (std::size_t j = 0; j < n; ++j)
                p[j] -= lr * g[j];
        }

        if (step % config.log_every == 0 || step + 1 == config.steps) {
            result.log.push_back({step, mean_loss, att_sum * inv_batch,
                                  ctc_sum * inv_batch, perm_index, skipped});
        }
    }
    return result;
}

EvalReport evaluate(const ToyModelParams &params, const SyntheticTask &task,
                    const DataSpec &data, const EvalConfig &config) {
    task.validate();
    config.validate(task);

    const ModelConfig model{params.hidden_dim, params.max_target_len};
    EvalReport report;
    for (int n_mix : config.conditions) {
        ConditionReport cond;
        cond.n_mix = n_mix;
        cond.items = config.items_per_condition;

        std::size_t exact = 0, truncated = 0, control_tokens = 0;
        Rng rng(derive_seed(config.seed, static_cast<uint64_t>(n_mix)));
        for (std::size_t i = 0; i < config.items_per_condition; ++i) {
            const ToyItem item = sample_item(task, data, model, rng, n_mix);

            SpeakerSetTranscript refs;
            refs.streams =
                deserialize(item.rendered.canonical_target, DecodeMode::strict);

            DecodeOptions opts;
            opts.max_len = params.max_target_len;
            opts.max_consecutive_controls = task.max_speakers - 1;
            const DecodeResult decoded =
                decode_greedy(params, item.rendered.frames, opts);
            SpeakerSetTranscript hyps;
            hyps.streams = deserialize(decoded.stream, DecodeMode::lenient);

            const ScoreReport score = pit_wer(refs, hyps);
            cond.counts += EditCounts{score.substitutions, score.insertions,
                                      score.deletions};
            cond.ref_words += score.ref_word_count;
            if (hyps.streams == refs.streams)
                ++exact;
            if (decoded.truncated)
                ++truncated;
            control_tokens += decoded.stream.control_count();

            // capacity-one baseline: same parameters, control tokens masked
            DecodeOptions base_opts = opts;
            base_opts.allow_control_tokens = false;
            const DecodeResult base_decoded =
                decode_greedy(params, item.rendered.frames, base_opts);
            SpeakerSetTranscript base_hyps;
            base_hyps.streams = deserialize(base_decoded.stream, DecodeMode::lenient);
            const ScoreReport base_score = oracle_k_wer(refs, base_hyps, 1);
            cond.baseline_counts +=
                EditCounts{base_score.substitutions, base_score.insertions,
                           base_score.deletions};
            cond.baseline_ref_words += base_score.ref_word_count;
        }

        const double items = static_cast<double>(cond.items);
        cond.wer = cond.ref_words > 0
                       ? static_cast<double>(cond.counts.total()) / cond.ref_words
                       : 0.0;
        cond.baseline_wer =
            cond.baseline_ref_words > 0
                ? static_cast<double>(cond.baseline_counts.total()) /
                      cond.baseline_ref_words
                : 0.0;
        cond.exact_match_rate = exact / items;
        cond.truncation_rate = truncated / items;
        cond.avg_control_tokens = control_tokens / items;
        report.conditions.push_back(cond);
    }
    return report;
}

} // namespace toggl::toy
