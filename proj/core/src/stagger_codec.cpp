#include "toggl/stagger_codec.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "toggl/error.hpp"

namespace toggl {

void validate_token(const TimedToken &token) {
    if (token.text.empty())
        throw DataError("lexical token must be non-empty");
    if (token.text == kNextLiteral || token.text == kPrevLiteral)
        throw DataError("lexical token equals reserved control literal: " + token.text);
    for (unsigned char c : token.text) {
        if (std::isspace(c))
            throw DataError("lexical token contains whitespace: '" + token.text + "'");
    }
    if (!std::isfinite(token.start) || token.start < 0.0)
        throw DataError("token start time must be finite and non-negative");
}

void validate_transcript(const TimedTranscript &transcript) {
    double prev = 0.0;
    bool first = true;
    for (const auto &token : transcript.tokens) {
        validate_token(token);
        if (!first && token.start < prev)
            throw DataError("token start times decrease in transcript '" +
                            transcript.speaker_id + "'");
        prev = token.start;
        first = false;
    }
}

std::size_t TogglStream::lexical_count() const {
    std::size_t n = 0;
    for (const auto &item : items)
        if (!item.is_control())
            ++n;
    return n;
}

SpeakerOrder order_speakers(std::span<const TimedTranscript> transcripts) {
    if (transcripts.empty())
        throw DataError("order_speakers: no transcripts");
    for (const auto &t : transcripts) {
        if (t.tokens.empty())
            throw DataError("order_speakers: transcript '" + t.speaker_id +
                            "' has no tokens");
        validate_transcript(t);
    }
    std::vector<std::size_t> order(transcripts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return transcripts[a].tokens.front().start <
               transcripts[b].tokens.front().start;
    });
    return SpeakerOrder{std::move(order)};
}

namespace {

void validate_order(const SpeakerOrder &order, std::size_t n) {
    if (order.ordering.size() != n)
        throw DataError("speaker order arity does not match transcript count");
    std::vector<bool> seen(n, false);
    for (std::size_t pos : order.ordering) {
        if (pos >= n || seen[pos])
            throw DataError("speaker order is not a valid permutation");
        seen[pos] = true;
    }
}

} // namespace

TogglStream serialize(std::span<const TimedTranscript> transcripts,
                      const SpeakerOrder &order) {
    if (transcripts.empty())
        throw DataError("serialize: no transcripts");
    validate_order(order, transcripts.size());
    for (const auto &t : transcripts)
        validate_transcript(t);

    struct Entry {
        double start;
        std::size_t ordered_index;
        const std::string *text;
    };
    std::vector<Entry> entries;
    for (std::size_t k = 0; k < order.ordering.size(); ++k) {
        const auto &transcript = transcripts[order.ordering[k]];
        for (const auto &token : transcript.tokens)
            entries.push_back({token.start, k, &token.text});
    }
    // Stable on (start, ordered index): equal keys keep within-speaker order.
    std::stable_sort(entries.begin(), entries.end(), [](const Entry &a, const Entry &b) {
        if (a.start != b.start)
            return a.start < b.start;
        return a.ordered_index < b.ordered_index;
    });

    TogglStream stream;
    stream.items.reserve(entries.size() * 2);
    std::size_t current = 0;
    for (const auto &entry : entries) {
        while (current < entry.ordered_index) {
            stream.items.push_back(StreamItem::next());
            ++current;
        }
        while (current > entry.ordered_index) {
            stream.items.push_back(StreamItem::prev());
            --current;
        }
        stream.items.push_back(StreamItem::lexical_token(*entry.text));
    }
    return stream;
}

std::map<int, std::vector<std::string>> deserialize(const TogglStream &stream,
                                                    DecodeMode mode) {
    std::map<int, std::vector<std::string>> result;
    int index = 0;
    for (std::size_t pos = 0; pos < stream.items.size(); ++pos) {
        const auto &item = stream.items[pos];
        switch (item.kind) {
        case ItemKind::next:
            ++index;
            break;
        case ItemKind::prev:
            if (index == 0) {
                if (mode == DecodeMode::strict)
                    throw DataError("speaker index underflow at stream position " +
                                    std::to_string(pos));
                // lenient: clamp at zero
            } else {
                --index;
            }
            break;
        case ItemKind::lexical:
            result[index].push_back(item.text);
            break;
        }
    }
    return result;
}

std::vector<std::string> strip_control_tokens(const TogglStream &stream) {
    std::vector<std::string> tokens;
    tokens.reserve(stream.items.size());
    for (const auto &item : stream.items)
        if (!item.is_control())
            tokens.push_back(item.text);
    return tokens;
}

std::vector<PermutationTarget>
enumerate_permutation_targets(std::span<const TimedTranscript> transcripts,
                              std::size_t speaker_cap) {
    if (transcripts.empty())
        throw DataError("enumerate_permutation_targets: no transcripts");
    if (transcripts.size() > speaker_cap)
        throw DataError("enumerate_permutation_targets: " +
                        std::to_string(transcripts.size()) +
                        " speakers exceeds cap of " + std::to_string(speaker_cap));

    const SpeakerOrder canonical = order_speakers(transcripts);

    std::vector<std::size_t> perm(transcripts.size());
    std::iota(perm.begin(), perm.end(), 0);

    std::vector<PermutationTarget> targets;
    do {
        PermutationTarget target;
        target.permutation = perm;
        target.stream = serialize(transcripts, SpeakerOrder{perm});
        target.canonical = (perm == canonical.ordering);
        targets.push_back(std::move(target));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return targets;
}

std::string to_text(const TogglStream &stream) {
    std::string out;
    for (const auto &item : stream.items) {
        if (!out.empty())
            out += ' ';
        switch (item.kind) {
        case ItemKind::next:
            out += kNextLiteral;
            break;
        case ItemKind::prev:
            out += kPrevLiteral;
            break;
        case ItemKind::lexical:
            out += item.text;
            break;
        }
    }
    return out;
}

TogglStream stream_from_text(std::string_view text) {
    TogglStream stream;
    std::istringstream in{std::string(text)};
    std::string token;
    while (in >> token) {
        if (token == kNextLiteral)
            stream.items.push_back(StreamItem::next());
        else if (token == kPrevLiteral)
            stream.items.push_back(StreamItem::prev());
        else
            stream.items.push_back(StreamItem::lexical_token(token));
    }
    return stream;
}

} // namespace toggl
