#include "toggl/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <unordered_map>

#include "toggl/error.hpp"
#include "toggl/rng.hpp"

namespace toggl {

std::vector<double> MixSpec::absolute_offsets_s() const {
    std::vector<double> abs(offsets_s.size(), 0.0);
    double acc = 0.0;
    for (std::size_t n = 0; n < offsets_s.size(); ++n) {
        acc += offsets_s[n];
        abs[n] = acc;
    }
    return abs;
}

MixSpec sample_mix_spec(std::span<const double> source_durations_s, uint64_t seed) {
    if (source_durations_s.empty())
        throw DataError("sample_mix_spec: no source durations");
    for (double d : source_durations_s)
        if (!(d > 0.0))
            throw DataError("sample_mix_spec: non-positive source duration");

    Rng rng(seed);
    MixSpec spec;
    spec.offsets_s.resize(source_durations_s.size(), 0.0);
    spec.gains_db.resize(source_durations_s.size(), 0.0);
    for (std::size_t n = 1; n < source_durations_s.size(); ++n) {
        spec.offsets_s[n] =
            rng.uniform(0.0, kMaxOffsetFraction * source_durations_s[n - 1]);
        spec.gains_db[n] = rng.uniform(-kGainRangeDb, kGainRangeDb);
    }
    return spec;
}

double db_to_amplitude(double gain_db) { return std::pow(10.0, gain_db / 20.0); }

namespace {

double rms(std::span<const float> samples) {
    double acc = 0.0;
    for (float s : samples)
        acc += static_cast<double>(s) * s;
    return samples.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(samples.size()));
}

double rms(std::span<const double> samples) {
    double acc = 0.0;
    for (double s : samples)
        acc += s * s;
    return samples.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(samples.size()));
}

} // namespace

MixtureRecord mix(std::span<const Waveform> sources, const MixSpec &spec) {
    if (sources.empty())
        throw DataError("mix: no sources");
    if (spec.offsets_s.size() != sources.size() ||
        spec.gains_db.size() != sources.size())
        throw DataError("mix: spec arity does not match source count");
    const int rate = sources[0].sample_rate;
    for (const auto &src : sources) {
        if (src.sample_rate != rate)
            throw DataError("mix: sample rate mismatch");
        if (src.samples.empty())
            throw DataError("mix: empty source waveform");
    }
    if (spec.offsets_s[0] != 0.0 || spec.gains_db[0] != 0.0)
        throw DataError("mix: first source must have offset 0 and gain 0");
    for (std::size_t n = 1; n < sources.size(); ++n) {
        const double limit =
            kMaxOffsetFraction * sources[n - 1].duration_s() + 1e-9;
        if (spec.offsets_s[n] < 0.0 || spec.offsets_s[n] > limit)
            throw DataError("mix: offset of source " + std::to_string(n) +
                            " outside [0, 90%] of the previous source");
        if (spec.gains_db[n] < -kGainRangeDb || spec.gains_db[n] > kGainRangeDb)
            throw DataError("mix: gain of source " + std::to_string(n) +
                            " outside +-3 dB");
    }

    const auto abs_offsets = spec.absolute_offsets_s();
    std::vector<std::size_t> offset_samples(sources.size());
    std::size_t total = 0;
    for (std::size_t n = 0; n < sources.size(); ++n) {
        offset_samples[n] =
            static_cast<std::size_t>(std::llround(abs_offsets[n] * rate));
        total = std::max(total, offset_samples[n] + sources[n].samples.size());
    }

    std::vector<double> acc(total, 0.0);
    double cumulative_gain = 1.0;
    for (std::size_t n = 0; n < sources.size(); ++n) {
        cumulative_gain *= db_to_amplitude(spec.gains_db[n]);
        const auto &samples = sources[n].samples;
        double *dst = acc.data() + offset_samples[n];
        for (std::size_t i = 0; i < samples.size(); ++i)
            dst[i] += cumulative_gain * static_cast<double>(samples[i]);
    }

    const double target_rms = rms(std::span<const float>(sources[0].samples));
    const double mix_rms = rms(std::span<const double>(acc));
    if (target_rms <= 0.0)
        throw DataError("mix: first source is silent, cannot normalize");
    if (mix_rms <= 0.0)
        throw DataError("mix: mixture is silent, cannot normalize");
    const double scale = target_rms / mix_rms;

    MixtureRecord record;
    record.mixture.sample_rate = rate;
    record.mixture.samples.resize(total);
    for (std::size_t i = 0; i < total; ++i)
        record.mixture.samples[i] = static_cast<float>(acc[i] * scale);
    record.spec = spec;

    std::vector<double> durations(sources.size());
    for (std::size_t n = 0; n < sources.size(); ++n)
        durations[n] = sources[n].duration_s();
    record.overlap_fraction = compute_overlap_fraction(spec, durations);
    return record;
}

double compute_overlap_fraction(const MixSpec &spec,
                                std::span<const double> source_durations_s) {
    if (spec.offsets_s.size() != source_durations_s.size())
        throw DataError("compute_overlap_fraction: arity mismatch");
    if (source_durations_s.size() < 2)
        return 0.0;

    const auto starts = spec.absolute_offsets_s();
    std::vector<double> bounds;
    double total_end = 0.0;
    for (std::size_t n = 0; n < starts.size(); ++n) {
        bounds.push_back(starts[n]);
        bounds.push_back(starts[n] + source_durations_s[n]);
        total_end = std::max(total_end, starts[n] + source_durations_s[n]);
    }
    if (total_end <= 0.0)
        return 0.0;
    std::sort(bounds.begin(), bounds.end());

    // Activity is constant between consecutive boundaries; probe midpoints.
    double overlapped = 0.0;
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        const double lo = bounds[i], hi = bounds[i + 1];
        if (hi <= lo)
            continue;
        const double mid = 0.5 * (lo + hi);
        int active = 0;
        for (std::size_t n = 0; n < starts.size(); ++n)
            if (starts[n] <= mid && mid < starts[n] + source_durations_s[n])
                ++active;
        if (active >= 2)
            overlapped += hi - lo;
    }
    return overlapped / total_end;
}

std::vector<MixtureManifestEntry>
synthesize_dataset(std::span<const SourceUtterance> corpus, int n_mix,
                   std::size_t count, uint64_t seed, const std::string &out_dir) {
    if (n_mix < 1 || n_mix > 4)
        throw ConfigError("synthesize_dataset: n_mix must be in 1..4");

    // Deterministic speaker grouping (sorted by speaker id).
    std::map<std::string, std::vector<std::size_t>> by_speaker;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        by_speaker[corpus[i].speaker].push_back(i);
    if (by_speaker.size() < static_cast<std::size_t>(n_mix))
        throw DataError("synthesize_dataset: need >= " + std::to_string(n_mix) +
                        " distinct speakers, manifest has " +
                        std::to_string(by_speaker.size()));
    std::vector<const std::vector<std::size_t> *> speakers;
    for (const auto &[_, utts] : by_speaker)
        speakers.push_back(&utts);

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "wav");

    std::unordered_map<std::string, Waveform> wav_cache;
    auto load = [&](const std::string &path) -> const Waveform & {
        auto it = wav_cache.find(path);
        if (it == wav_cache.end())
            it = wav_cache.emplace(path, read_wav(path)).first;
        return it->second;
    };

    std::vector<MixtureManifestEntry> entries;
    entries.reserve(count);
    for (std::size_t item = 0; item < count; ++item) {
        Rng rng(derive_seed(seed, item));

        // n_mix distinct speakers without replacement, then one utterance each.
        std::vector<std::size_t> speaker_pick(speakers.size());
        for (std::size_t k = 0; k < speaker_pick.size(); ++k)
            speaker_pick[k] = k;
        for (int k = 0; k < n_mix; ++k) {
            const std::size_t j =
                k + static_cast<std::size_t>(rng.uniform_int(speaker_pick.size() - k));
            std::swap(speaker_pick[k], speaker_pick[j]);
        }
        std::vector<const SourceUtterance *> picked;
        for (int k = 0; k < n_mix; ++k) {
            const auto &utts = *speakers[speaker_pick[k]];
            picked.push_back(&corpus[utts[rng.uniform_int(utts.size())]]);
        }

        std::vector<Waveform> waves;
        std::vector<double> durations;
        for (const auto *utt : picked) {
            waves.push_back(load(utt->wav_path));
            durations.push_back(waves.back().duration_s());
        }

        const MixSpec spec = sample_mix_spec(durations, rng.next_u64());
        MixtureRecord record = mix(waves, spec);

        char name[32];
        std::snprintf(name, sizeof(name), "mix_%06zu", item);

        MixtureManifestEntry entry;
        entry.id = name;
        entry.wav_path = std::string("wav/") + name + ".wav";
        entry.clipped_samples =
            write_wav((fs::path(out_dir) / entry.wav_path).string(), record.mixture);

        const auto abs_offsets = spec.absolute_offsets_s();
        std::vector<TimedTranscript> transcripts;
        for (std::size_t n = 0; n < picked.size(); ++n) {
            TimedTranscript t;
            t.speaker_id = picked[n]->speaker;
            for (const auto &token : picked[n]->tokens)
                t.tokens.push_back({token.text, token.start + abs_offsets[n]});
            transcripts.push_back(std::move(t));
            entry.sources.push_back(picked[n]->id);
        }
        entry.toggl_target =
            to_text(serialize(transcripts, order_speakers(transcripts)));
        entry.offsets_s = abs_offsets;
        entry.gains_db = spec.gains_db;
        entry.overlap_fraction = record.overlap_fraction;
        entries.push_back(std::move(entry));
    }
    return entries;
}

} // namespace toggl
