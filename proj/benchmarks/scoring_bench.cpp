#include <benchmark/benchmark.h>

#include "toggl/rng.hpp"
#include "toggl/scoring.hpp"

using namespace toggl;

namespace {

std::vector<std::string> tokens(Rng &rng, std::size_t n) {
    std::vector<std::string> out(n);
    for (auto &t : out)
        t = std::string(1, static_cast<char>('a' + rng.uniform_int(20)));
    return out;
}

} // namespace

static void BM_EditDistance(benchmark::State &state) {
    Rng rng(7);
    const auto ref = tokens(rng, state.range(0));
    const auto hyp = tokens(rng, state.range(0));
    for (auto _ : state) {
        auto counts = edit_distance(ref, hyp);
        benchmark::DoNotOptimize(counts);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EditDistance)->Range(16, 512)->Complexity();

static void BM_PitWer(benchmark::State &state) {
    Rng rng(11);
    SpeakerSetTranscript refs, hyps;
    for (int s = 0; s < state.range(0); ++s) {
        refs.streams[s] = tokens(rng, 40);
        hyps.streams[s] = tokens(rng, 40);
    }
    for (auto _ : state) {
        auto report = pit_wer(refs, hyps);
        benchmark::DoNotOptimize(report);
    }
}
BENCHMARK(BM_PitWer)->Arg(2)->Arg(4);

static void BM_HungarianAssignment(benchmark::State &state) {
    Rng rng(13);
    const std::size_t n = state.range(0);
    std::vector<std::vector<std::int64_t>> cost(n, std::vector<std::int64_t>(n));
    for (auto &row : cost)
        for (auto &c : row)
            c = static_cast<std::int64_t>(rng.uniform_int(1000));
    for (auto _ : state) {
        auto assignment = min_cost_assignment(cost);
        benchmark::DoNotOptimize(assignment);
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_HungarianAssignment)->Range(8, 64)->Complexity();
