#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace toggl {

// Multi-speaker WER with permutation-optimal assignment of hypothesis streams
// to reference speakers, oracle-k subset scoring for capacity-limited
// baselines, and pooled per-overlap-bucket breakdowns.

struct EditCounts {
    std::size_t substitutions = 0;
    std::size_t insertions = 0;
    std::size_t deletions = 0;

    std::size_t total() const { return substitutions + insertions + deletions; }
    EditCounts &operator+=(const EditCounts &o) {
        substitutions += o.substitutions;
        insertions += o.insertions;
        deletions += o.deletions;
        return *this;
    }
};

// Minimal Levenshtein counts; ties between decompositions of equal total cost
// prefer substitutions over insert+delete pairs.
EditCounts edit_distance(std::span<const std::string> ref,
                         std::span<const std::string> hyp);

struct SpeakerSetTranscript {
    std::map<int, std::vector<std::string>> streams;
};

struct ScoreReport {
    std::size_t substitutions = 0;
    std::size_t insertions = 0;
    std::size_t deletions = 0;
    std::size_t ref_word_count = 0;
    double wer = 0.0;
    // hypothesis stream index -> reference speaker index (nullopt: unmatched)
    std::vector<std::pair<int, std::optional<int>>> assignment;
    bool oracle = false;
    int oracle_k = 0;
    std::vector<int> selected_refs; // oracle subset, when oracle == true

    std::size_t errors() const { return substitutions + insertions + deletions; }
};

// Optimal assignment over all hyp->ref pairings, exhaustive up to 5 streams,
// Hungarian above. Unmatched reference words count as deletions, unmatched
// hypothesis words as insertions.
ScoreReport pit_wer(const SpeakerSetTranscript &refs,
                    const SpeakerSetTranscript &hyps);

// Identity pairing in key order, no permutation search.
ScoreReport fixed_order_wer(const SpeakerSetTranscript &refs,
                            const SpeakerSetTranscript &hyps);

// Best pit_wer over all size-k subsets of reference speakers; an optimistic
// score for models that cannot emit more than k streams.
ScoreReport oracle_k_wer(const SpeakerSetTranscript &refs,
                         const SpeakerSetTranscript &hyps, int k);

struct UtteranceScore {
    EditCounts counts;
    std::size_t ref_words = 0;
    double overlap_fraction = 0.0;
};

struct BucketRow {
    double lo = 0.0;
    double hi = 0.0;
    bool closed_upper = false;
    std::size_t utterances = 0;
    EditCounts counts;
    std::size_t ref_words = 0;
    double wer = 0.0;
};

inline constexpr std::array<double, 6> kDefaultBucketEdges{0.0, 0.2, 0.4,
                                                           0.6, 0.8, 1.0};

// Pools error counts per bucket; buckets are lower-inclusive half-open,
// except the last which is closed.
std::vector<BucketRow> bucket_report(std::span<const UtteranceScore> utterances,
                                     std::span<const double> edges);

// Minimum-cost square assignment (Hungarian, O(n^3)); returns row -> column.
std::vector<std::size_t>
min_cost_assignment(const std::vector<std::vector<std::int64_t>> &cost);

} // namespace toggl
