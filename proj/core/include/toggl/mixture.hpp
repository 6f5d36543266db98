#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "toggl/stagger_codec.hpp"
#include "toggl/wav.hpp"

namespace toggl {

// Overlapping-speech synthesis. Source n starts at a random offset within
// [0, 90%] of the previous source's length and is gain-shifted by a uniform
// [-3, +3] dB relative to the previous source; the final mixture is rescaled
// so its RMS matches the first source's RMS.

struct MixSpec {
    // offsets_s[n] is relative to source n-1's start; offsets_s[0] == 0.
    std::vector<double> offsets_s;
    // gains_db[n] is relative to source n-1; gains_db[0] == 0.
    std::vector<double> gains_db;

    std::vector<double> absolute_offsets_s() const;
};

struct MixtureRecord {
    Waveform mixture;
    MixSpec spec;
    std::vector<std::string> sources;
    double overlap_fraction = 0.0;
};

inline constexpr double kMaxOffsetFraction = 0.9;
inline constexpr double kGainRangeDb = 3.0;

MixSpec sample_mix_spec(std::span<const double> source_durations_s, uint64_t seed);

double db_to_amplitude(double gain_db);

MixtureRecord mix(std::span<const Waveform> sources, const MixSpec &spec);

// Time with >= 2 simultaneously active sources divided by the mixture span.
double compute_overlap_fraction(const MixSpec &spec,
                                std::span<const double> source_durations_s);

// One source utterance of the input manifest.
struct SourceUtterance {
    std::string id;
    std::string speaker;
    std::string wav_path;
    std::vector<TimedToken> tokens;
};

// One line of the output manifest.
struct MixtureManifestEntry {
    std::string id;
    std::string wav_path; // relative to the output directory
    std::vector<std::string> sources;
    std::vector<double> offsets_s; // absolute start per source
    std::vector<double> gains_db;  // relative draws, as sampled
    double overlap_fraction = 0.0;
    std::size_t clipped_samples = 0;
    std::string toggl_target;
};

// Draws `count` mixtures of `n_mix` distinct-speaker utterances, writes the
// mixed WAVs under out_dir/wav/ and returns the manifest entries. Item i is
// reproducible in isolation from (seed, i).
std::vector<MixtureManifestEntry>
synthesize_dataset(std::span<const SourceUtterance> corpus, int n_mix,
                   std::size_t count, uint64_t seed, const std::string &out_dir);

} // namespace toggl
