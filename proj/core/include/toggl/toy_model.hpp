#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "toggl/mat.hpp"
#include "toggl/stagger_codec.hpp"

namespace toggl::toy {

// Desk-scale encoder-decoder over synthetic symbolic mixtures. Symbols render
// to fixed random frame embeddings; overlapping speakers are summed; the model
// learns to emit the staggered token stream. Joint objective: autoregressive
// cross-entropy (optionally permutation-invariant) plus CTC on duplicated
// encoder frames against the control-token-free target.

struct SyntheticTask {
    int vocab_size = 20;       // lexical symbols, excluding specials
    int frames_per_symbol = 3;
    int feature_dim = 16;
    double noise_std = 0.15;
    int max_speakers = 3;
    // rescale summed features to the first speaker's solo RMS, mirroring the
    // waveform mixture normalization
    bool normalize_energy = true;
    uint64_t embedding_seed = 7; // fixes the symbol embedding table

    void validate() const;
};

std::string symbol_text(int symbol);
int symbol_id(const std::string &text, int vocab_size);

// vocab_size x feature_dim, entries N(0,1), derived from embedding_seed.
Mat symbol_embeddings(const SyntheticTask &task);

// Decoder token id layout: symbols 0..V-1, then the specials.
struct TokenIds {
    int vocab = 0;
    int next() const { return vocab; }
    int prev() const { return vocab + 1; }
    int bos() const { return vocab + 2; }
    int eos() const { return vocab + 3; }
    int count() const { return vocab + 4; }
    bool is_control(int id) const { return id == next() || id == prev(); }
};

struct ModelConfig {
    int hidden_dim = 48;
    int max_target_len = 96; // decoder steps incl. EOS; sizes the position table
};

struct ToyModelParams {
    int feature_dim = 0;
    int hidden_dim = 0;
    int vocab_size = 0;
    int max_target_len = 0;

    // encoder: per-frame transform + one self-attention layer
    Mat w_in, b_in;
    Mat wq, wk, wv, w_ao;
    // decoder: embedding + position table, recurrent state, one cross-attention
    Mat emb, pos;
    Mat w_qd, w_qs, b_qd;
    Mat w_ck, w_cv;
    Mat w_m1, w_m2, w_m3, b_m;
    Mat w_out, b_out;
    // CTC projection over vocab + blank
    Mat w_ctc, b_ctc;

    static ToyModelParams init(const SyntheticTask &task, const ModelConfig &model,
                               uint64_t seed);
    static ToyModelParams zeros_like(const ToyModelParams &other);

    std::vector<std::pair<const char *, Mat *>> tensors();
    std::vector<std::pair<const char *, const Mat *>> tensors() const;

    TokenIds token_ids() const { return TokenIds{vocab_size}; }
    std::size_t parameter_count() const;
    void check_finite() const; // NumericError on NaN/inf
};

struct TrainConfig {
    double ctc_weight = 0.3; // lambda
    bool pit_enabled = true;
    int duplication_factor = 2;
    double learning_rate = 0.2;
    int steps = 30000;
    int batch_size = 8;
    uint64_t seed = 1234;
    int log_every = 10;

    void validate() const;
};

struct RenderedItem {
    Mat frames; // T x feature_dim
    std::vector<TimedTranscript> transcripts;
    TogglStream canonical_target;
};

// Offsets are absolute frame starts per speaker; time unit is frames.
RenderedItem render_features(std::span<const std::vector<int>> symbol_seqs,
                             std::span<const int> offsets_frames,
                             const SyntheticTask &task, uint64_t noise_seed);

struct LossBreakdown {
    double total = 0.0;
    double attention = 0.0; // mean CE per decoder step, chosen permutation
    double ctc = 0.0;       // mean negative log-likelihood per duplicated frame
    std::size_t perm_index = 0;
    bool ctc_skipped = false;
};

// Gradients accumulate into *grads (zeros_like shape). With pit disabled only
// the canonical permutation is used. When error_on_infeasible is false an
// infeasible CTC target drops the CTC term and sets ctc_skipped instead of
// throwing.
LossBreakdown loss(const ToyModelParams &params, const SyntheticTask &task,
                   const Mat &frames,
                   std::span<const PermutationTarget> permutation_targets,
                   const TrainConfig &config, ToyModelParams *grads,
                   bool error_on_infeasible = true);

struct DecodeResult {
    TogglStream stream;
    std::vector<int> token_ids; // without BOS/EOS
    bool truncated = false;
};

struct DecodeOptions {
    int max_len = 96;
    bool allow_control_tokens = true;
    // guard against degenerate control loops; <= 0 disables the cap
    int max_consecutive_controls = 0;
};

DecodeResult decode_greedy(const ToyModelParams &params, const Mat &frames,
                           const DecodeOptions &options);

// Frame-wise argmax over the CTC head after duplication, repeats collapsed
// and blanks dropped. Control tokens never appear: speaker attribution is the
// autoregressive decoder's job.
std::vector<std::string> ctc_greedy_decode(const ToyModelParams &params,
                                           const Mat &frames,
                                           int duplication_factor);

// Versioned binary checkpoint: magic, JSON header (dims, vocab, config hash),
// then raw little-endian doubles per tensor.
void save_checkpoint(const std::string &path, const ToyModelParams &params,
                     const SyntheticTask &task, const std::string &config_hash);

struct Checkpoint {
    ToyModelParams params;
    SyntheticTask task;
    std::string config_hash;
};
Checkpoint load_checkpoint(const std::string &path);

} // namespace toggl::toy
