#include "toggl/scoring.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>

#include "toggl/error.hpp"

namespace toggl {

EditCounts edit_distance(std::span<const std::string> ref,
                         std::span<const std::string> hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<EditCounts> prev(m + 1), cur(m + 1);
    for (std::size_t j = 1; j <= m; ++j)
        prev[j].insertions = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = EditCounts{0, 0, i};
        for (std::size_t j = 1; j <= m; ++j) {
            EditCounts diag = prev[j - 1];
            if (ref[i - 1] != hyp[j - 1])
                ++diag.substitutions;
            EditCounts del = prev[j];
            ++del.deletions;
            EditCounts ins = cur[j - 1];
            ++ins.insertions;
            // equal totals prefer the substitution path, then deletion
            EditCounts best = diag;
            if (del.total() < best.total())
                best = del;
            if (ins.total() < best.total())
                best = ins;
            cur[j] = best;
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

namespace {

struct WerValue {
    std::size_t errors = 0;
    std::size_t ref_words = 0;

    double value() const {
        if (ref_words > 0)
            return static_cast<double>(errors) / static_cast<double>(ref_words);
        return errors == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    }

    // exact rational comparison of errors/ref_words
    bool less_than(const WerValue &o) const {
        const bool inf_a = ref_words == 0 && errors > 0;
        const bool inf_b = o.ref_words == 0 && o.errors > 0;
        if (inf_a || inf_b)
            return !inf_a && inf_b;
        // empty references with no errors behave as 0/1
        const unsigned long long ea = errors, na = std::max<std::size_t>(ref_words, 1);
        const unsigned long long eb = o.errors, nb = std::max<std::size_t>(o.ref_words, 1);
        return ea * nb < eb * na;
    }
};

struct PaddedSets {
    std::vector<int> ref_keys;                          // real keys, then -1 pads
    std::vector<int> hyp_keys;                          // real keys, then -1 pads
    std::vector<const std::vector<std::string> *> refs; // nullptr = empty pad
    std::vector<const std::vector<std::string> *> hyps;
};

const std::vector<std::string> kEmptyStream{};

PaddedSets pad_to_square(const SpeakerSetTranscript &refs,
                         const SpeakerSetTranscript &hyps) {
    PaddedSets p;
    for (const auto &[key, stream] : refs.streams) {
        if (key < 0)
            throw DataError("negative reference stream index");
        p.ref_keys.push_back(key);
        p.refs.push_back(&stream);
    }
    for (const auto &[key, stream] : hyps.streams) {
        if (key < 0)
            throw DataError("negative hypothesis stream index");
        p.hyp_keys.push_back(key);
        p.hyps.push_back(&stream);
    }
    const std::size_t n = std::max(p.refs.size(), p.hyps.size());
    while (p.refs.size() < n) {
        p.ref_keys.push_back(-1);
        p.refs.push_back(&kEmptyStream);
    }
    while (p.hyps.size() < n) {
        p.hyp_keys.push_back(-1);
        p.hyps.push_back(&kEmptyStream);
    }
    return p;
}

ScoreReport report_for_assignment(const PaddedSets &p,
                                  const std::vector<std::vector<EditCounts>> &pair,
                                  std::span<const std::size_t> hyp_to_ref) {
    ScoreReport report;
    EditCounts counts;
    for (std::size_t i = 0; i < hyp_to_ref.size(); ++i)
        counts += pair[i][hyp_to_ref[i]];
    report.substitutions = counts.substitutions;
    report.insertions = counts.insertions;
    report.deletions = counts.deletions;
    for (const auto *ref : p.refs)
        report.ref_word_count += ref->size();
    report.wer = WerValue{counts.total(), report.ref_word_count}.value();
    for (std::size_t i = 0; i < hyp_to_ref.size(); ++i) {
        if (p.hyp_keys[i] < 0)
            continue; // padded hypothesis
        const int ref_key = p.ref_keys[hyp_to_ref[i]];
        report.assignment.emplace_back(p.hyp_keys[i],
                                       ref_key < 0 ? std::nullopt
                                                   : std::optional<int>(ref_key));
    }
    return report;
}

constexpr std::size_t kExhaustiveLimit = 5;

} // namespace

std::vector<std::size_t>
min_cost_assignment(const std::vector<std::vector<std::int64_t>> &cost) {
    const std::size_t n = cost.size();
    for (const auto &row : cost)
        if (row.size() != n)
            throw DataError("min_cost_assignment: matrix is not square");
    if (n == 0)
        return {};

    const std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<std::int64_t> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            std::size_t j1 = 0;
            std::int64_t delta = kInf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j])
                    continue;
                const std::int64_t cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> result(n);
    for (std::size_t j = 1; j <= n; ++j)
        result[p[j] - 1] = j - 1;
    return result;
}

ScoreReport pit_wer(const SpeakerSetTranscript &refs,
                    const SpeakerSetTranscript &hyps) {
    if (refs.streams.empty())
        throw DataError("pit_wer: empty reference");
    const PaddedSets p = pad_to_square(refs, hyps);
    const std::size_t n = p.refs.size();

    std::vector<std::vector<EditCounts>> pair(n, std::vector<EditCounts>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            pair[i][j] = edit_distance(*p.refs[j], *p.hyps[i]);

    std::vector<std::size_t> best;
    if (n <= kExhaustiveLimit) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::size_t best_cost = std::numeric_limits<std::size_t>::max();
        do {
            std::size_t cost = 0;
            for (std::size_t i = 0; i < n; ++i)
                cost += pair[i][perm[i]].total();
            if (cost < best_cost) {
                best_cost = cost;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<std::vector<std::int64_t>> cost(n, std::vector<std::int64_t>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                cost[i][j] = static_cast<std::int64_t>(pair[i][j].total());
        best = min_cost_assignment(cost);
    }
    return report_for_assignment(p, pair, best);
}

ScoreReport fixed_order_wer(const SpeakerSetTranscript &refs,
                            const SpeakerSetTranscript &hyps) {
    if (refs.streams.empty())
        throw DataError("fixed_order_wer: empty reference");
    const PaddedSets p = pad_to_square(refs, hyps);
    const std::size_t n = p.refs.size();
    std::vector<std::vector<EditCounts>> pair(n, std::vector<EditCounts>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            pair[i][j] = edit_distance(*p.refs[j], *p.hyps[i]);
    std::vector<std::size_t> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    return report_for_assignment(p, pair, identity);
}

ScoreReport oracle_k_wer(const SpeakerSetTranscript &refs,
                         const SpeakerSetTranscript &hyps, int k) {
    if (k < 1)
        throw ConfigError("oracle_k_wer: k must be >= 1");
    if (static_cast<std::size_t>(k) > refs.streams.size())
        throw DataError("oracle_k_wer: k exceeds reference speaker count");
    if (hyps.streams.size() > static_cast<std::size_t>(k))
        throw DataError("oracle_k_wer: hypothesis has more than k streams");

    std::vector<int> keys;
    for (const auto &[key, _] : refs.streams)
        keys.push_back(key);

    // lexicographic subset enumeration; first minimal subset wins ties
    std::vector<std::size_t> pick(k);
    std::iota(pick.begin(), pick.end(), 0);
    ScoreReport best_report;
    WerValue best_value;
    std::vector<int> best_subset;
    bool have_best = false;
    while (true) {
        SpeakerSetTranscript subset;
        std::vector<int> subset_keys;
        for (std::size_t idx : pick) {
            subset.streams[keys[idx]] = refs.streams.at(keys[idx]);
            subset_keys.push_back(keys[idx]);
        }
        ScoreReport report = pit_wer(subset, hyps);
        const WerValue value{report.errors(), report.ref_word_count};
        const bool better =
            !have_best || value.less_than(best_value) ||
            (!best_value.less_than(value) && report.errors() < best_report.errors());
        if (better) {
            best_report = std::move(report);
            best_value = value;
            best_subset = subset_keys;
            have_best = true;
        }
        // advance combination
        int pos = k - 1;
        while (pos >= 0 && pick[pos] == keys.size() - static_cast<std::size_t>(k - pos))
            --pos;
        if (pos < 0)
            break;
        ++pick[pos];
        for (int q = pos + 1; q < k; ++q)
            pick[q] = pick[q - 1] + 1;
    }
    best_report.oracle = true;
    best_report.oracle_k = k;
    best_report.selected_refs = best_subset;
    return best_report;
}

std::vector<BucketRow> bucket_report(std::span<const UtteranceScore> utterances,
                                     std::span<const double> edges) {
    if (edges.size() < 2)
        throw DataError("bucket_report: need at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw DataError("bucket_report: edges must be strictly increasing");

    std::vector<BucketRow> rows(edges.size() - 1);
    for (std::size_t b = 0; b < rows.size(); ++b) {
        rows[b].lo = edges[b];
        rows[b].hi = edges[b + 1];
        rows[b].closed_upper = (b + 1 == rows.size());
    }

    for (const auto &utt : utterances) {
        const double f = utt.overlap_fraction;
        bool placed = false;
        for (auto &row : rows) {
            const bool in_bucket =
                f >= row.lo && (row.closed_upper ? f <= row.hi : f < row.hi);
            if (in_bucket) {
                ++row.utterances;
                row.counts += utt.counts;
                row.ref_words += utt.ref_words;
                placed = true;
                break;
            }
        }
        if (!placed)
            throw DataError("bucket_report: overlap fraction " +
                            std::to_string(f) + " outside bucket edges");
    }
    for (auto &row : rows)
        row.wer = WerValue{row.counts.total(), row.ref_words}.value();
    return rows;
}

} // namespace toggl
