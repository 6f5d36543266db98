#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toggl/mixture.hpp"
#include "toggl/stagger_codec.hpp"

namespace toggl {

// Line-delimited JSON manifests. One record per line; unknown keys are
// rejected so that typos in hand-written manifests fail loudly.

// {"id": ..., "speaker": ..., "wav_path": ..., "tokens": [{"text": ..., "start": ...}]}
// wav_path is optional for transcript-only use (serialize subcommand).
std::vector<SourceUtterance> read_source_manifest(const std::string &path);

void write_mixture_manifest(const std::string &path,
                            std::span<const MixtureManifestEntry> entries);
std::vector<MixtureManifestEntry> read_mixture_manifest(const std::string &path);

// Scoring-side view of one utterance: stream index -> token sequence.
struct StreamSet {
    std::map<int, std::vector<std::string>> streams;
};

// Accepted record forms:
//   {"id": ..., "streams": [["a","b"], ...]}        indices 0..n-1
//   {"id": ..., "streams": {"0": ["a"], "2": ...}}  explicit indices
//   {"id": ..., "toggl": "a [NEXT] b"}              deserialized on read
// plus an optional "overlap_fraction" used by bucket reports.
struct ScoringRecord {
    std::string id;
    StreamSet streams;
    std::optional<double> overlap_fraction;
};

std::vector<ScoringRecord> read_scoring_manifest(const std::string &path,
                                                 DecodeMode mode);

} // namespace toggl
