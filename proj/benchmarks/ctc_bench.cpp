#include <benchmark/benchmark.h>

#include "toggl/ctc.hpp"
#include "toggl/rng.hpp"

using namespace toggl;

namespace {

ctc::FrameProbs random_grid(std::size_t frames, std::size_t vocab) {
    Rng rng(3);
    ctc::FrameProbs p;
    p.frames = frames;
    p.vocab = vocab;
    p.p.resize(frames * vocab);
    for (std::size_t t = 0; t < frames; ++t) {
        double sum = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
            p.at(t, v) = 0.01 + rng.uniform();
            sum += p.at(t, v);
        }
        for (std::size_t v = 0; v < vocab; ++v)
            p.at(t, v) /= sum;
    }
    return p;
}

ctc::Target random_target(std::size_t len, std::size_t vocab) {
    Rng rng(5);
    ctc::Target t;
    for (std::size_t i = 0; i < len; ++i)
        t.labels.push_back(1 + static_cast<int>(rng.uniform_int(vocab - 1)));
    return t;
}

} // namespace

static void BM_CtcForward(benchmark::State &state) {
    const std::size_t frames = state.range(0);
    const auto probs = random_grid(frames, 32);
    const auto target = random_target(frames / 4, 32);
    for (auto _ : state) {
        auto ll = ctc::forward_logprob(probs, target);
        benchmark::DoNotOptimize(ll);
    }
    state.SetComplexityN(frames);
}
BENCHMARK(BM_CtcForward)->Range(32, 512)->Complexity();

static void BM_CtcForwardBackward(benchmark::State &state) {
    const std::size_t frames = state.range(0);
    const auto probs = random_grid(frames, 32);
    const auto target = random_target(frames / 4, 32);
    for (auto _ : state) {
        auto fb = ctc::forward_backward(probs, target);
        benchmark::DoNotOptimize(fb);
    }
    state.SetComplexityN(frames);
}
BENCHMARK(BM_CtcForwardBackward)->Range(32, 256)->Complexity();

static void BM_DuplicateFrames(benchmark::State &state) {
    Mat frames(state.range(0), 32);
    for (auto _ : state) {
        auto out = ctc::duplicate_frames(frames, 3);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_DuplicateFrames)->Arg(64)->Arg(256);
