#include <benchmark/benchmark.h>

#include "toggl/rng.hpp"
#include "toggl/stagger_codec.hpp"

using namespace toggl;

namespace {

std::vector<TimedTranscript> make_transcripts(std::size_t speakers,
                                              std::size_t tokens) {
    Rng rng(42);
    std::vector<TimedTranscript> out(speakers);
    for (std::size_t sp = 0; sp < speakers; ++sp) {
        out[sp].speaker_id = "spk" + std::to_string(sp);
        double t = rng.uniform(0.0, 1.0);
        for (std::size_t i = 0; i < tokens; ++i) {
            out[sp].tokens.push_back({"w" + std::to_string(rng.uniform_int(30)), t});
            t += rng.uniform(0.05, 0.4);
        }
    }
    return out;
}

} // namespace

static void BM_Serialize(benchmark::State &state) {
    const auto transcripts = make_transcripts(state.range(0), 50);
    const auto order = order_speakers(transcripts);
    for (auto _ : state) {
        auto stream = serialize(transcripts, order);
        benchmark::DoNotOptimize(stream);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 50);
}
BENCHMARK(BM_Serialize)->Arg(1)->Arg(2)->Arg(4);

static void BM_Deserialize(benchmark::State &state) {
    const auto transcripts = make_transcripts(state.range(0), 50);
    const auto stream = serialize(transcripts, order_speakers(transcripts));
    for (auto _ : state) {
        auto decoded = deserialize(stream, DecodeMode::lenient);
        benchmark::DoNotOptimize(decoded);
    }
    state.SetItemsProcessed(state.iterations() * stream.items.size());
}
BENCHMARK(BM_Deserialize)->Arg(2)->Arg(4);

static void BM_TextRoundTrip(benchmark::State &state) {
    const auto transcripts = make_transcripts(4, 50);
    const auto stream = serialize(transcripts, order_speakers(transcripts));
    for (auto _ : state) {
        auto restored = stream_from_text(to_text(stream));
        benchmark::DoNotOptimize(restored);
    }
}
BENCHMARK(BM_TextRoundTrip);
