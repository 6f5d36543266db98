#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace toggl {

// Staggered-labeling codec: interleaves several time-aligned transcripts into
// one flat token stream with [NEXT]/[PREV] speaker-switch tokens, and splits
// such a stream back into per-speaker token sequences.

inline constexpr std::string_view kNextLiteral = "[NEXT]";
inline constexpr std::string_view kPrevLiteral = "[PREV]";

struct TimedToken {
    std::string text;
    double start = 0.0; // seconds
};

struct TimedTranscript {
    std::string speaker_id;
    std::vector<TimedToken> tokens;
};

// Throw DataError on violated invariants (reserved literals, negative or
// non-finite times, decreasing start times, whitespace inside tokens).
void validate_token(const TimedToken &token);
void validate_transcript(const TimedTranscript &transcript);

enum class ItemKind : uint8_t { lexical, next, prev };

struct StreamItem {
    ItemKind kind = ItemKind::lexical;
    std::string text; // empty for control tokens

    static StreamItem lexical_token(std::string text) {
        return {ItemKind::lexical, std::move(text)};
    }
    static StreamItem next() { return {ItemKind::next, {}}; }
    static StreamItem prev() { return {ItemKind::prev, {}}; }

    bool is_control() const { return kind != ItemKind::lexical; }
    bool operator==(const StreamItem &other) const = default;
};

struct TogglStream {
    std::vector<StreamItem> items;

    std::size_t lexical_count() const;
    std::size_t control_count() const { return items.size() - lexical_count(); }
    bool operator==(const TogglStream &other) const = default;
};

// ordering[k] = input position of the k-th speaker in the serialized stream.
struct SpeakerOrder {
    std::vector<std::size_t> ordering;
};

enum class DecodeMode { strict, lenient };

// First-onset ordering: sort by the start time of each transcript's first
// token, ties broken by input position.
SpeakerOrder order_speakers(std::span<const TimedTranscript> transcripts);

// Merge all tokens sorted by (start, ordered speaker index) and emit the
// switch tokens between attribution changes. The stream starts attributed to
// ordered speaker 0.
TogglStream serialize(std::span<const TimedTranscript> transcripts,
                      const SpeakerOrder &order);

// Walk the stream with a running speaker index (+1 on NEXT, -1 on PREV).
// Strict mode throws DataError when the index would go below zero; lenient
// mode clamps at zero. Only indices that received at least one lexical token
// appear in the result.
std::map<int, std::vector<std::string>> deserialize(const TogglStream &stream,
                                                    DecodeMode mode);

std::vector<std::string> strip_control_tokens(const TogglStream &stream);

struct PermutationTarget {
    std::vector<std::size_t> permutation;
    TogglStream stream;
    bool canonical = false; // first-onset order
};

inline constexpr std::size_t kDefaultSpeakerCap = 4;

// All S! speaker orders paired with their serialized streams; the first-onset
// order is flagged. The cap guards against factorial blowup.
std::vector<PermutationTarget>
enumerate_permutation_targets(std::span<const TimedTranscript> transcripts,
                              std::size_t speaker_cap = kDefaultSpeakerCap);

// Text form: tokens separated by single spaces, control tokens as the literal
// [NEXT] / [PREV] strings.
std::string to_text(const TogglStream &stream);
TogglStream stream_from_text(std::string_view text);

} // namespace toggl
