#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "toggl/mat.hpp"
#include "toggl/stagger_codec.hpp"

namespace toggl::ctc {

// Reference CTC forward/backward over per-frame posterior grids, plus the
// frame-duplication enhancement that keeps targets feasible when the token
// count approaches the frame count.

inline constexpr int kBlank = 0;
inline constexpr double kProbFloor = 1e-30;

struct FrameProbs {
    std::size_t frames = 0;
    std::size_t vocab = 0; // includes blank at index 0
    std::vector<double> p; // row-major frames x vocab

    double at(std::size_t t, std::size_t v) const { return p[t * vocab + v]; }
    double &at(std::size_t t, std::size_t v) { return p[t * vocab + v]; }
};

// Throws DataError unless entries are >= 0 and each row sums to 1 within 1e-9.
void validate(const FrameProbs &probs);

struct Target {
    std::vector<int> labels; // blank excluded
};

// Each row repeated n times consecutively: [e1, e2] with n=3 gives
// [e1, e1, e1, e2, e2, e2]. Applied unconditionally at inference, with n equal
// to the maximum speaker count seen in training.
Mat duplicate_frames(const Mat &frames, int n);
FrameProbs duplicate_frames(const FrameProbs &probs, int n);

// Frames needed for any valid alignment: |target| plus a mandatory blank
// between adjacent equal labels.
std::size_t min_alignment_frames(const Target &target);
bool feasible(std::size_t frames, const Target &target);

// Log of total probability over all collapse-equivalent alignments; log-space
// forward recursion over the blank-interleaved target with probabilities
// floored at kProbFloor. Infeasible targets are an error, not -inf.
double forward_logprob(const FrameProbs &probs, const Target &target);

struct ForwardBackward {
    double logprob = 0.0;
    // d(-logprob)/d(log p[t][v]), same layout as the grid
    std::vector<double> grad_logp;
};
ForwardBackward forward_backward(const FrameProbs &probs, const Target &target);

// Strips control tokens then maps to vocabulary indices (indices >= 1; 0 is
// reserved for blank). Unknown lexical tokens are an error.
Target make_target(const TogglStream &stream,
                   const std::map<std::string, int> &vocab);

// Forward lattice as TSV for inspection: rows t, columns the expanded target
// states, cells log alpha.
std::string lattice_tsv(const FrameProbs &probs, const Target &target);

} // namespace toggl::ctc
