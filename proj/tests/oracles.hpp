// Test-only reference implementations, independent of the library code paths
// they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "toggl/rng.hpp"
#include "toggl/stagger_codec.hpp"

namespace oracle {

// --- random timed transcripts ----------------------------------------------

inline std::vector<toggl::TimedTranscript>
random_transcripts(toggl::Rng &rng, std::size_t max_speakers = 4,
                   std::size_t max_tokens = 50) {
    const std::size_t speakers = 1 + rng.uniform_int(max_speakers);
    std::vector<toggl::TimedTranscript> transcripts(speakers);
    for (std::size_t sp = 0; sp < speakers; ++sp) {
        transcripts[sp].speaker_id = "spk" + std::to_string(sp);
        const std::size_t tokens = 1 + rng.uniform_int(max_tokens);
        double t = rng.uniform(0.0, 2.0);
        for (std::size_t i = 0; i < tokens; ++i) {
            transcripts[sp].tokens.push_back(
                {"w" + std::to_string(rng.uniform_int(25)), t});
            // occasionally repeat the exact timestamp to exercise ties
            if (rng.uniform() > 0.2)
                t += rng.uniform(0.0, 0.5);
        }
    }
    return transcripts;
}

// --- stable sort-merge oracle for serialization -----------------------------

// Global (start, ordered speaker)-sorted lexical token sequence.
inline std::vector<std::string>
sorted_merge(const std::vector<toggl::TimedTranscript> &transcripts,
             const std::vector<std::size_t> &order) {
    struct Row {
        double start;
        std::size_t ordered;
        std::size_t seq;
        const std::string *text;
    };
    std::vector<Row> rows;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto &tr = transcripts[order[k]];
        for (std::size_t i = 0; i < tr.tokens.size(); ++i)
            rows.push_back({tr.tokens[i].start, k, i, &tr.tokens[i].text});
    }
    std::sort(rows.begin(), rows.end(), [](const Row &a, const Row &b) {
        if (a.start != b.start)
            return a.start < b.start;
        if (a.ordered != b.ordered)
            return a.ordered < b.ordered;
        return a.seq < b.seq;
    });
    std::vector<std::string> out;
    for (const auto &row : rows)
        out.push_back(*row.text);
    return out;
}

// --- brute-force CTC path enumeration ---------------------------------------

// Sum of probabilities over all V^T paths whose collapse (merge repeats, drop
// blanks) equals the target. Exponential; only for tiny grids.
inline double ctc_brute_force(const std::vector<std::vector<double>> &probs,
                              const std::vector<int> &target, int blank = 0) {
    const std::size_t T = probs.size();
    if (T == 0)
        return target.empty() ? 1.0 : 0.0;
    const std::size_t V = probs[0].size();
    std::vector<std::size_t> path(T, 0);
    double total = 0.0;
    while (true) {
        std::vector<int> collapsed;
        int prev = -1;
        for (std::size_t t = 0; t < T; ++t) {
            const int s = static_cast<int>(path[t]);
            if (s != prev && s != blank)
                collapsed.push_back(s);
            prev = s;
        }
        if (collapsed == target) {
            double p = 1.0;
            for (std::size_t t = 0; t < T; ++t)
                p *= probs[t][path[t]];
            total += p;
        }
        std::size_t pos = 0;
        while (pos < T && ++path[pos] == V) {
            path[pos] = 0;
            ++pos;
        }
        if (pos == T)
            break;
    }
    return total;
}

// --- brute-force assignment minima -------------------------------------------

// Minimum total cost over all bijections row -> column.
inline std::size_t
assignment_brute_force(const std::vector<std::vector<std::size_t>> &cost) {
    const std::size_t n = cost.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = static_cast<std::size_t>(-1);
    do {
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i)
            total += cost[i][perm[i]];
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// --- reference Levenshtein (plain cost, no decomposition) -------------------

inline std::size_t levenshtein(const std::vector<std::string> &a,
                               const std::vector<std::string> &b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace oracle
