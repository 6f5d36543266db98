#include "toggl/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "toggl/error.hpp"

namespace toggl::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
    if (a == kNegInf)
        return b;
    if (b == kNegInf)
        return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

std::vector<int> expand_with_blanks(const Target &target) {
    std::vector<int> ext(2 * target.labels.size() + 1, kBlank);
    for (std::size_t i = 0; i < target.labels.size(); ++i)
        ext[2 * i + 1] = target.labels[i];
    return ext;
}

void validate_target(const FrameProbs &probs, const Target &target) {
    for (int label : target.labels) {
        if (label == kBlank)
            throw DataError("CTC target contains the blank index");
        if (label < 0 || static_cast<std::size_t>(label) >= probs.vocab)
            throw DataError("CTC target label " + std::to_string(label) +
                            " outside vocabulary of size " +
                            std::to_string(probs.vocab));
    }
    if (!feasible(probs.frames, target))
        throw DataError("CTC target of minimal alignment length " +
                        std::to_string(min_alignment_frames(target)) +
                        " is infeasible for " + std::to_string(probs.frames) +
                        " frames");
}

// alpha[t][s] in log space, including the emission at t.
Mat forward_lattice(const FrameProbs &probs, const std::vector<int> &ext) {
    const std::size_t T = probs.frames, S = ext.size();
    Mat alpha(T, S);
    alpha.fill(kNegInf);
    alpha(0, 0) = floored_log(probs.at(0, ext[0]));
    if (S > 1)
        alpha(0, 1) = floored_log(probs.at(0, ext[1]));
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            double acc = alpha(t - 1, s);
            if (s >= 1)
                acc = log_sum_exp(acc, alpha(t - 1, s - 1));
            if (s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2])
                acc = log_sum_exp(acc, alpha(t - 1, s - 2));
            alpha(t, s) = acc + floored_log(probs.at(t, ext[s]));
        }
    }
    return alpha;
}

} // namespace

void validate(const FrameProbs &probs) {
    if (probs.p.size() != probs.frames * probs.vocab)
        throw DataError("FrameProbs storage does not match frames x vocab");
    if (probs.vocab < 1)
        throw DataError("FrameProbs needs at least the blank symbol");
    for (std::size_t t = 0; t < probs.frames; ++t) {
        double sum = 0.0;
        for (std::size_t v = 0; v < probs.vocab; ++v) {
            const double x = probs.at(t, v);
            if (!(x >= 0.0))
                throw DataError("negative or NaN probability at frame " +
                                std::to_string(t));
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw DataError("frame " + std::to_string(t) +
                            " probabilities sum to " + std::to_string(sum));
    }
}

Mat duplicate_frames(const Mat &frames, int n) {
    if (n < 1)
        throw ConfigError("duplicate_frames: factor must be >= 1");
    Mat out(frames.rows * static_cast<std::size_t>(n), frames.cols);
    for (std::size_t k = 0; k < out.rows; ++k) {
        const std::size_t src = k / static_cast<std::size_t>(n);
        std::copy(frames.row(src), frames.row(src) + frames.cols, out.row(k));
    }
    return out;
}

FrameProbs duplicate_frames(const FrameProbs &probs, int n) {
    if (n < 1)
        throw ConfigError("duplicate_frames: factor must be >= 1");
    FrameProbs out;
    out.frames = probs.frames * static_cast<std::size_t>(n);
    out.vocab = probs.vocab;
    out.p.resize(out.frames * out.vocab);
    for (std::size_t k = 0; k < out.frames; ++k) {
        const std::size_t src = k / static_cast<std::size_t>(n);
        std::copy(probs.p.begin() + src * probs.vocab,
                  probs.p.begin() + (src + 1) * probs.vocab,
                  out.p.begin() + k * out.vocab);
    }
    return out;
}

std::size_t min_alignment_frames(const Target &target) {
    std::size_t repeats = 0;
    for (std::size_t i = 1; i < target.labels.size(); ++i)
        if (target.labels[i] == target.labels[i - 1])
            ++repeats;
    return target.labels.size() + repeats;
}

bool feasible(std::size_t frames, const Target &target) {
    return frames >= min_alignment_frames(target);
}

double forward_logprob(const FrameProbs &probs, const Target &target) {
    validate(probs);
    validate_target(probs, target);
    if (probs.frames == 0)
        return 0.0; // empty target over zero frames: the empty alignment
    const auto ext = expand_with_blanks(target);
    const Mat alpha = forward_lattice(probs, ext);
    const std::size_t T = probs.frames, S = ext.size();
    double loglik = alpha(T - 1, S - 1);
    if (S > 1)
        loglik = log_sum_exp(loglik, alpha(T - 1, S - 2));
    return loglik;
}

ForwardBackward forward_backward(const FrameProbs &probs, const Target &target) {
    validate(probs);
    validate_target(probs, target);
    const std::size_t T = probs.frames;
    if (T == 0)
        return {0.0, {}};
    const auto ext = expand_with_blanks(target);
    const std::size_t S = ext.size();

    const Mat alpha = forward_lattice(probs, ext);

    // beta[t][s] excludes the emission at t, so alpha + beta is a full path.
    Mat beta(T, S);
    beta.fill(kNegInf);
    beta(T - 1, S - 1) = 0.0;
    if (S > 1)
        beta(T - 1, S - 2) = 0.0;
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t s = 0; s < S; ++s) {
            double acc = beta(t + 1, s) + floored_log(probs.at(t + 1, ext[s]));
            if (s + 1 < S)
                acc = log_sum_exp(acc, beta(t + 1, s + 1) +
                                           floored_log(probs.at(t + 1, ext[s + 1])));
            if (s + 2 < S && ext[s + 2] != kBlank && ext[s + 2] != ext[s])
                acc = log_sum_exp(acc, beta(t + 1, s + 2) +
                                           floored_log(probs.at(t + 1, ext[s + 2])));
            beta(t, s) = acc;
        }
    }

    double loglik = alpha(T - 1, S - 1);
    if (S > 1)
        loglik = log_sum_exp(loglik, alpha(T - 1, S - 2));

    ForwardBackward result;
    result.logprob = loglik;
    result.grad_logp.assign(T * probs.vocab, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            const double joint = alpha(t, s) + beta(t, s);
            if (joint == kNegInf)
                continue;
            // d(-loglik)/d(log p[t][ext[s]]) -= posterior
            result.grad_logp[t * probs.vocab + static_cast<std::size_t>(ext[s])] -=
                std::exp(joint - loglik);
        }
    }
    return result;
}

Target make_target(const TogglStream &stream,
                   const std::map<std::string, int> &vocab) {
    Target target;
    for (const auto &text : strip_control_tokens(stream)) {
        const auto it = vocab.find(text);
        if (it == vocab.end())
            throw DataError("token '" + text + "' not in CTC vocabulary");
        if (it->second == kBlank)
            throw DataError("token '" + text + "' maps to the blank index");
        target.labels.push_back(it->second);
    }
    return target;
}

std::string lattice_tsv(const FrameProbs &probs, const Target &target) {
    validate(probs);
    validate_target(probs, target);
    const auto ext = expand_with_blanks(target);
    const Mat alpha =
        probs.frames > 0 ? forward_lattice(probs, ext) : Mat(0, ext.size());

    std::ostringstream out;
    out << "t";
    for (std::size_t s = 0; s < ext.size(); ++s)
        out << "\ts" << s << ":" << ext[s];
    out << "\n";
    for (std::size_t t = 0; t < alpha.rows; ++t) {
        out << t;
        for (std::size_t s = 0; s < ext.size(); ++s) {
            out << "\t";
            if (alpha(t, s) == kNegInf)
                out << "-inf";
            else
                out << alpha(t, s);
        }
        out << "\n";
    }
    return out.str();
}

} // namespace toggl::ctc
