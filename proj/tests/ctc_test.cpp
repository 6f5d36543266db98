#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "toggl/ctc.hpp"
#include "toggl/error.hpp"

using namespace toggl;
using namespace toggl::ctc;

namespace {

FrameProbs grid(const std::vector<std::vector<double>> &rows) {
    FrameProbs p;
    p.frames = rows.size();
    p.vocab = rows.empty() ? 0 : rows[0].size();
    for (const auto &row : rows)
        p.p.insert(p.p.end(), row.begin(), row.end());
    return p;
}

FrameProbs random_grid(Rng &rng, std::size_t frames, std::size_t vocab) {
    FrameProbs p;
    p.frames = frames;
    p.vocab = vocab;
    p.p.resize(frames * vocab);
    for (std::size_t t = 0; t < frames; ++t) {
        double sum = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) {
            p.at(t, v) = 0.05 + rng.uniform();
            sum += p.at(t, v);
        }
        for (std::size_t v = 0; v < vocab; ++v)
            p.at(t, v) /= sum;
    }
    return p;
}

std::vector<std::vector<double>> grid_rows(const FrameProbs &p) {
    std::vector<std::vector<double>> rows(p.frames,
                                          std::vector<double>(p.vocab));
    for (std::size_t t = 0; t < p.frames; ++t)
        for (std::size_t v = 0; v < p.vocab; ++v)
            rows[t][v] = p.at(t, v);
    return rows;
}

} // namespace

TEST_CASE("duplicate_frames repeats rows consecutively") {
    Mat m(2, 3);
    for (std::size_t c = 0; c < 3; ++c) {
        m(0, c) = 1.0 + c;
        m(1, c) = 10.0 + c;
    }
    const Mat d = duplicate_frames(m, 3);
    REQUIRE(d.rows == 6);
    for (std::size_t k = 0; k < 6; ++k)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(d(k, c) == m(k / 3, c));

    const Mat same = duplicate_frames(m, 1);
    CHECK(same.d == m.d);

    Mat seven(7, 2);
    CHECK(duplicate_frames(seven, 2).rows == 14);

    CHECK_THROWS_AS(duplicate_frames(m, 0), ConfigError);
}

TEST_CASE("feasibility counts mandatory blanks between repeats") {
    CHECK(feasible(3, Target{{1, 2, 3}}));
    CHECK(min_alignment_frames(Target{{1, 1}}) == 3);
    CHECK_FALSE(feasible(2, Target{{1, 1}}));
    // the duplication enhancement makes the same target fit
    CHECK(feasible(2 * 2, Target{{1, 1}}));
    CHECK(feasible(0, Target{}));
}

TEST_CASE("forward matches closed forms on tiny grids") {
    // T=1, p(a)=0.6: the only path is 'a'
    const auto g1 = grid({{0.4, 0.6}});
    CHECK(forward_logprob(g1, Target{{1}}) ==
          doctest::Approx(std::log(0.6)).epsilon(1e-12));

    // T=2: paths a-, -a, aa
    const auto g2 = grid({{0.4, 0.6}, {0.4, 0.6}});
    CHECK(forward_logprob(g2, Target{{1}}) ==
          doctest::Approx(std::log(0.84)).epsilon(1e-12));
}

TEST_CASE("infeasible targets are an error, not -inf") {
    const auto g = grid({{0.4, 0.6}, {0.4, 0.6}});
    CHECK_THROWS_AS(forward_logprob(g, Target{{1, 1}}), DataError);
    CHECK_THROWS_AS(forward_logprob(g, Target{{1, 1, 1}}), DataError);
    // blank or out-of-range labels are rejected
    CHECK_THROWS_AS(forward_logprob(g, Target{{0}}), DataError);
    CHECK_THROWS_AS(forward_logprob(g, Target{{7}}), DataError);
}

TEST_CASE("forward equals exhaustive path enumeration") {
    Rng rng(31337);
    int checked = 0;
    for (int iter = 0; iter < 400; ++iter) {
        const std::size_t T = 1 + rng.uniform_int(6);
        const std::size_t V = 2 + rng.uniform_int(2); // 2..3 incl. blank
        const auto probs = random_grid(rng, T, V);
        Target target;
        const std::size_t len = rng.uniform_int(4); // 0..3
        for (std::size_t i = 0; i < len; ++i)
            target.labels.push_back(1 + static_cast<int>(rng.uniform_int(V - 1)));
        if (!feasible(T, target))
            continue;
        const double brute =
            oracle::ctc_brute_force(grid_rows(probs), target.labels);
        const double got = forward_logprob(probs, target);
        CHECK(got == doctest::Approx(std::log(brute)).epsilon(1e-10));
        ++checked;
    }
    CHECK(checked > 200);
}

TEST_CASE("forward_backward gradient matches finite differences of logits") {
    Rng rng(60601);
    for (int iter = 0; iter < 25; ++iter) {
        const std::size_t T = 2 + rng.uniform_int(4);
        const std::size_t V = 3;
        Mat logits(T, V);
        for (double &x : logits.d)
            x = rng.uniform(-1.0, 1.0);
        Target target;
        const std::size_t len = 1 + rng.uniform_int(2);
        for (std::size_t i = 0; i < len; ++i)
            target.labels.push_back(1 + static_cast<int>(rng.uniform_int(V - 1)));
        if (!feasible(T, target))
            continue;

        auto probs_of = [&](const Mat &lg) {
            FrameProbs p;
            p.frames = T;
            p.vocab = V;
            p.p.resize(T * V);
            for (std::size_t t = 0; t < T; ++t) {
                double hi = lg(t, 0);
                for (std::size_t v = 1; v < V; ++v)
                    hi = std::max(hi, lg(t, v));
                double sum = 0.0;
                for (std::size_t v = 0; v < V; ++v) {
                    p.at(t, v) = std::exp(lg(t, v) - hi);
                    sum += p.at(t, v);
                }
                for (std::size_t v = 0; v < V; ++v)
                    p.at(t, v) /= sum;
            }
            return p;
        };

        const FrameProbs probs = probs_of(logits);
        const auto fb = forward_backward(probs, target);
        CHECK(fb.logprob == doctest::Approx(forward_logprob(probs, target)));

        const double h = 1e-6;
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t v = 0; v < V; ++v) {
                Mat plus = logits, minus = logits;
                plus(t, v) += h;
                minus(t, v) -= h;
                const double fd = (-forward_logprob(probs_of(plus), target) +
                                   forward_logprob(probs_of(minus), target)) /
                                  (2 * h);
                // chain rule: dL/dlogit = g - p * sum(g)
                double gsum = 0.0;
                for (std::size_t u = 0; u < V; ++u)
                    gsum += fb.grad_logp[t * V + u];
                const double analytic =
                    fb.grad_logp[t * V + v] - probs.at(t, v) * gsum;
                CHECK(analytic == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

// On flat grids a longer target can hold MORE mass (it admits combinatorially
// more alignments), so the non-increasing-in-|target| check runs on
// blank-dominant grids, the shape trained CTC posteriors actually take.
TEST_CASE("longer targets lose probability mass on blank-dominant grids") {
    Rng rng(808);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t T = 5 + rng.uniform_int(3);
        auto probs = random_grid(rng, T, 4);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t v = 0; v < 4; ++v)
                probs.at(t, v) *= v == 0 ? 0.8 : 0.2 / 3.0;
            double sum = 0.0;
            for (std::size_t v = 0; v < 4; ++v)
                sum += probs.at(t, v);
            for (std::size_t v = 0; v < 4; ++v)
                probs.at(t, v) /= sum;
        }
        Target shorter, longer;
        shorter.labels = {1 + static_cast<int>(rng.uniform_int(3))};
        longer.labels = shorter.labels;
        longer.labels.push_back(1 + static_cast<int>(rng.uniform_int(3)));
        const double a = forward_logprob(probs, shorter);
        const double b = forward_logprob(probs, longer);
        CHECK(b <= a + 1e-12);
        CHECK(a <= 0.0);
        CHECK(b <= 0.0);
    }
}

TEST_CASE("empty target over any frame count is the all-blank path") {
    const auto g = grid({{0.7, 0.3}, {0.9, 0.1}});
    CHECK(forward_logprob(g, Target{}) ==
          doctest::Approx(std::log(0.7 * 0.9)).epsilon(1e-12));
}

TEST_CASE("log-space stays finite on large grids") {
    const std::size_t T = 1000, V = 100;
    FrameProbs p;
    p.frames = T;
    p.vocab = V;
    p.p.assign(T * V, 1.0 / V);
    Target target;
    for (int i = 0; i < 50; ++i)
        target.labels.push_back(1 + (i % (V - 1)));
    const double ll = forward_logprob(p, target);
    CHECK(std::isfinite(ll));
    const auto fb = forward_backward(p, target);
    CHECK(std::isfinite(fb.logprob));
    for (double g : fb.grad_logp)
        CHECK(std::isfinite(g));
}

TEST_CASE("make_target strips controls and maps to indices") {
    const std::map<std::string, int> vocab{{"a", 1}, {"x", 2}};
    TogglStream s{{StreamItem::lexical_token("a"), StreamItem::next(),
                   StreamItem::lexical_token("x")}};
    CHECK(make_target(s, vocab).labels == std::vector<int>{1, 2});

    TogglStream controls{{StreamItem::next(), StreamItem::prev()}};
    CHECK(make_target(controls, vocab).labels.empty());

    TogglStream oov{{StreamItem::lexical_token("zzz")}};
    CHECK_THROWS_AS(make_target(oov, vocab), DataError);

    const std::map<std::string, int> bad{{"a", 0}};
    TogglStream s2{{StreamItem::lexical_token("a")}};
    CHECK_THROWS_AS(make_target(s2, bad), DataError);
}

TEST_CASE("frame probability validation") {
    FrameProbs bad;
    bad.frames = 1;
    bad.vocab = 2;
    bad.p = {0.5, 0.6};
    CHECK_THROWS_AS(validate(bad), DataError);
    bad.p = {-0.1, 1.1};
    CHECK_THROWS_AS(validate(bad), DataError);
    bad.p = {0.25, 0.75};
    CHECK_NOTHROW(validate(bad));
}

TEST_CASE("lattice dump has a row per frame") {
    const auto g = grid({{0.4, 0.6}, {0.5, 0.5}, {0.3, 0.7}});
    const auto tsv = lattice_tsv(g, Target{{1}});
    std::size_t lines = 0;
    for (char c : tsv)
        if (c == '\n')
            ++lines;
    CHECK(lines == 4); // header + 3 frames
    CHECK(tsv.find("s0:0") != std::string::npos);
    CHECK(tsv.find("s1:1") != std::string::npos);
}
