#include "toggl/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "toggl/ctc.hpp"
#include "toggl/error.hpp"
#include "toggl/rng.hpp"

namespace toggl::toy {

using nlohmann::json;

void SyntheticTask::validate() const {
    if (vocab_size < 2)
        throw ConfigError("task.vocab_size must be >= 2");
    if (frames_per_symbol < 1)
        throw ConfigError("task.frames_per_symbol must be >= 1");
    if (feature_dim < 1)
        throw ConfigError("task.feature_dim must be >= 1");
    if (noise_std < 0.0)
        throw ConfigError("task.noise_std must be >= 0");
    if (max_speakers < 1 || max_speakers > 4)
        throw ConfigError("task.max_speakers must be in 1..4");
}

void TrainConfig::validate() const {
    if (ctc_weight < 0.0 || ctc_weight > 1.0)
        throw ConfigError("train.ctc_weight must be in [0, 1]");
    if (duplication_factor < 1)
        throw ConfigError("train.duplication_factor must be >= 1");
    if (learning_rate <= 0.0)
        throw ConfigError("train.learning_rate must be > 0");
    if (steps < 0)
        throw ConfigError("train.steps must be >= 0");
    if (batch_size < 1)
        throw ConfigError("train.batch_size must be >= 1");
    if (log_every < 1)
        throw ConfigError("train.log_every must be >= 1");
}

std::string symbol_text(int symbol) { return "s" + std::to_string(symbol); }

int symbol_id(const std::string &text, int vocab_size) {
    if (text.size() < 2 || text[0] != 's')
        throw DataError("not a toy symbol token: '" + text + "'");
    int value = 0;
    for (std::size_t i = 1; i < text.size(); ++i) {
        if (text[i] < '0' || text[i] > '9')
            throw DataError("not a toy symbol token: '" + text + "'");
        value = value * 10 + (text[i] - '0');
    }
    if (value >= vocab_size)
        throw DataError("symbol index " + std::to_string(value) +
                        " outside vocabulary of " + std::to_string(vocab_size));
    return value;
}

Mat symbol_embeddings(const SyntheticTask &task) {
    Rng rng(task.embedding_seed);
    Mat emb(task.vocab_size, task.feature_dim);
    for (double &x : emb.d)
        x = rng.normal(0.0, 1.0);
    return emb;
}

// ---------------------------------------------------------------------------
// parameters

namespace {

void init_uniform(Mat &m, Rng &rng, double scale) {
    for (double &x : m.d)
        x = rng.uniform(-scale, scale);
}

} // namespace

ToyModelParams ToyModelParams::init(const SyntheticTask &task,
                                    const ModelConfig &model, uint64_t seed) {
    task.validate();
    if (model.hidden_dim < 1)
        throw ConfigError("model.hidden_dim must be >= 1");
    if (model.max_target_len < 2)
        throw ConfigError("model.max_target_len must be >= 2");

    ToyModelParams p;
    p.feature_dim = task.feature_dim;
    p.hidden_dim = model.hidden_dim;
    p.vocab_size = task.vocab_size;
    p.max_target_len = model.max_target_len;

    const std::size_t F = p.feature_dim, H = p.hidden_dim;
    const std::size_t Dv = p.token_ids().count(), Cv = p.vocab_size + 1;

    p.w_in = Mat(H, F);
    p.b_in = Mat(1, H);
    p.wq = Mat(H, H);
    p.wk = Mat(H, H);
    p.wv = Mat(H, H);
    p.w_ao = Mat(H, H);
    p.emb = Mat(Dv, H);
    p.pos = Mat(p.max_target_len, H);
    p.w_qd = Mat(H, H);
    p.w_qs = Mat(H, H);
    p.b_qd = Mat(1, H);
    p.w_ck = Mat(H, H);
    p.w_cv = Mat(H, H);
    p.w_m1 = Mat(H, H);
    p.w_m2 = Mat(H, H);
    p.w_m3 = Mat(H, H);
    p.b_m = Mat(1, H);
    p.w_out = Mat(Dv, H);
    p.b_out = Mat(1, Dv);
    p.w_ctc = Mat(Cv, H);
    p.b_ctc = Mat(1, Cv);

    Rng rng(seed);
    const double sf = 1.0 / std::sqrt(static_cast<double>(F));
    const double sh = 1.0 / std::sqrt(static_cast<double>(H));
    init_uniform(p.w_in, rng, sf);
    init_uniform(p.wq, rng, sh);
    init_uniform(p.wk, rng, sh);
    init_uniform(p.wv, rng, sh);
    init_uniform(p.w_ao, rng, sh);
    init_uniform(p.emb, rng, 0.3);
    init_uniform(p.pos, rng, 0.3);
    init_uniform(p.w_qd, rng, sh);
    init_uniform(p.w_qs, rng, sh);
    init_uniform(p.w_ck, rng, sh);
    init_uniform(p.w_cv, rng, sh);
    init_uniform(p.w_m1, rng, sh);
    init_uniform(p.w_m2, rng, sh);
    init_uniform(p.w_m3, rng, sh);
    init_uniform(p.w_out, rng, sh);
    init_uniform(p.w_ctc, rng, sh);
    return p;
}

ToyModelParams ToyModelParams::zeros_like(const ToyModelParams &other) {
    ToyModelParams p = other;
    for (auto &[_, m] : p.tensors())
        m->fill(0.0);
    return p;
}

std::vector<std::pair<const char *, Mat *>> ToyModelParams::tensors() {
    return {
        {"w_in", &w_in}, {"b_in", &b_in}, {"wq", &wq},       {"wk", &wk},
        {"wv", &wv},     {"w_ao", &w_ao}, {"emb", &emb},     {"pos", &pos},
        {"w_qd", &w_qd}, {"w_qs", &w_qs}, {"b_qd", &b_qd},   {"w_ck", &w_ck},
        {"w_cv", &w_cv}, {"w_m1", &w_m1}, {"w_m2", &w_m2},   {"w_m3", &w_m3},
        {"b_m", &b_m},   {"w_out", &w_out}, {"b_out", &b_out},
        {"w_ctc", &w_ctc}, {"b_ctc", &b_ctc},
    };
}

std::vector<std::pair<const char *, const Mat *>> ToyModelParams::tensors() const {
    std::vector<std::pair<const char *, const Mat *>> out;
    for (auto &[name, m] : const_cast<ToyModelParams *>(this)->tensors())
        out.emplace_back(name, m);
    return out;
}

std::size_t ToyModelParams::parameter_count() const {
    std::size_t n = 0;
    for (auto &[_, m] : tensors())
        n += m->size();
    return n;
}

void ToyModelParams::check_finite() const {
    for (auto &[name, m] : tensors())
        for (double x : m->d)
            if (!std::isfinite(x))
                throw NumericError(std::string("non-finite value in tensor ") + name);
}

// ---------------------------------------------------------------------------
// rendering

RenderedItem render_features(std::span<const std::vector<int>> symbol_seqs,
                             std::span<const int> offsets_frames,
                             const SyntheticTask &task, uint64_t noise_seed) {
    task.validate();
    if (symbol_seqs.empty())
        throw DataError("render_features: no speakers");
    if (symbol_seqs.size() != offsets_frames.size())
        throw DataError("render_features: offsets arity mismatch");
    if (symbol_seqs.size() > static_cast<std::size_t>(task.max_speakers))
        throw DataError("render_features: " + std::to_string(symbol_seqs.size()) +
                        " speakers exceeds task.max_speakers");

    const int fps = task.frames_per_symbol;
    std::size_t total_frames = 0;
    for (std::size_t sp = 0; sp < symbol_seqs.size(); ++sp) {
        if (symbol_seqs[sp].empty())
            throw DataError("render_features: empty symbol sequence");
        if (offsets_frames[sp] < 0)
            throw DataError("render_features: negative offset");
        for (int s : symbol_seqs[sp])
            if (s < 0 || s >= task.vocab_size)
                throw DataError("render_features: symbol outside vocabulary");
        total_frames = std::max(total_frames,
                                static_cast<std::size_t>(offsets_frames[sp]) +
                                    symbol_seqs[sp].size() * fps);
    }

    const Mat table = symbol_embeddings(task);
    RenderedItem item;
    item.frames = Mat(total_frames, task.feature_dim);
    for (std::size_t sp = 0; sp < symbol_seqs.size(); ++sp) {
        for (std::size_t i = 0; i < symbol_seqs[sp].size(); ++i) {
            const int sym = symbol_seqs[sp][i];
            for (int r = 0; r < fps; ++r) {
                double *dst =
                    item.frames.row(offsets_frames[sp] + i * fps + r);
                const double *src = table.row(sym);
                for (int f = 0; f < task.feature_dim; ++f)
                    dst[f] += src[f];
            }
        }
    }

    // mixture energy is normalized to the first speaker's solo energy, like
    // the waveform protocol; keeps any speaker count in the same input range
    if (task.normalize_energy && symbol_seqs.size() > 1) {
        double solo = 0.0;
        const std::size_t first_frames = symbol_seqs[0].size() * fps;
        for (std::size_t i = 0; i < first_frames; ++i) {
            const int sym = symbol_seqs[0][i / fps];
            const double *src = table.row(sym);
            for (int f = 0; f < task.feature_dim; ++f)
                solo += src[f] * src[f];
        }
        const double solo_rms =
            std::sqrt(solo / (first_frames * task.feature_dim));
        double mix = 0.0;
        for (double x : item.frames.d)
            mix += x * x;
        const double mix_rms = std::sqrt(mix / item.frames.d.size());
        if (solo_rms > 0.0 && mix_rms > 0.0) {
            const double scale = solo_rms / mix_rms;
            for (double &x : item.frames.d)
                x *= scale;
        }
    }

    if (task.noise_std > 0.0) {
        Rng rng(noise_seed);
        for (double &x : item.frames.d)
            x += rng.normal(0.0, task.noise_std);
    }

    for (std::size_t sp = 0; sp < symbol_seqs.size(); ++sp) {
        TimedTranscript t;
        t.speaker_id = "spk" + std::to_string(sp);
        for (std::size_t i = 0; i < symbol_seqs[sp].size(); ++i)
            t.tokens.push_back({symbol_text(symbol_seqs[sp][i]),
                                static_cast<double>(offsets_frames[sp]) +
                                    static_cast<double>(i * fps)});
        item.transcripts.push_back(std::move(t));
    }
    item.canonical_target = serialize(item.transcripts,
                                      order_speakers(item.transcripts));
    return item;
}

// ---------------------------------------------------------------------------
// small dense helpers

namespace {

// y = W x (+ b)
void affine(const Mat &w, const double *x, const Mat *b, double *y) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double *row = w.row(r);
        double acc = b ? b->d[r] : 0.0;
        for (std::size_t c = 0; c < w.cols; ++c)
            acc += row[c] * x[c];
        y[r] = acc;
    }
}

// out += W^T g
void matvec_transpose_acc(const Mat &w, const double *g, double *out) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double *row = w.row(r);
        const double gr = g[r];
        for (std::size_t c = 0; c < w.cols; ++c)
            out[c] += row[c] * gr;
    }
}

// dW += g x^T
void outer_acc(Mat &dw, const double *g, const double *x) {
    for (std::size_t r = 0; r < dw.rows; ++r) {
        double *row = dw.row(r);
        const double gr = g[r];
        for (std::size_t c = 0; c < dw.cols; ++c)
            row[c] += gr * x[c];
    }
}

void tanh_inplace(double *x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::tanh(x[i]);
}

// dpre = dpost * (1 - y^2), in place on dpost
void tanh_backward_inplace(const double *y, double *dpost, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        dpost[i] *= 1.0 - y[i] * y[i];
}

// Fixed sinusoidal position channels; the per-frame transform and the
// self-attention are otherwise position-blind, so frame addresses must enter
// explicitly for cross-attention to point anywhere.
void add_sinusoidal_position(std::size_t t, double *x, std::size_t n) {
    for (std::size_t i = 0; i + 1 < n; i += 2) {
        const double rate =
            std::pow(1.0e4, -static_cast<double>(i) / static_cast<double>(n));
        x[i] += std::sin(static_cast<double>(t) * rate);
        x[i + 1] += std::cos(static_cast<double>(t) * rate);
    }
}

// returns logZ; probs written in place over logits copy
double softmax_inplace(double *x, std::size_t n) {
    double hi = x[0];
    for (std::size_t i = 1; i < n; ++i)
        hi = std::max(hi, x[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - hi);
        sum += x[i];
    }
    for (std::size_t i = 0; i < n; ++i)
        x[i] /= sum;
    return hi + std::log(sum);
}

struct EncoderTrace {
    Mat h1, h1p, q, k, v, attw, ctx, e;
};

EncoderTrace encode(const ToyModelParams &p, const Mat &frames) {
    const std::size_t T = frames.rows, H = p.hidden_dim;
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(H));
    EncoderTrace tr;
    tr.h1 = Mat(T, H);
    tr.h1p = Mat(T, H);
    tr.q = Mat(T, H);
    tr.k = Mat(T, H);
    tr.v = Mat(T, H);
    tr.attw = Mat(T, T);
    tr.ctx = Mat(T, H);
    tr.e = Mat(T, H);

    for (std::size_t t = 0; t < T; ++t) {
        affine(p.w_in, frames.row(t), &p.b_in, tr.h1.row(t));
        tanh_inplace(tr.h1.row(t), H);
        std::copy(tr.h1.row(t), tr.h1.row(t) + H, tr.h1p.row(t));
        add_sinusoidal_position(t, tr.h1p.row(t), H);
    }
    for (std::size_t t = 0; t < T; ++t) {
        affine(p.wq, tr.h1p.row(t), nullptr, tr.q.row(t));
        affine(p.wk, tr.h1p.row(t), nullptr, tr.k.row(t));
        affine(p.wv, tr.h1p.row(t), nullptr, tr.v.row(t));
    }
    for (std::size_t t = 0; t < T; ++t) {
        double *w = tr.attw.row(t);
        for (std::size_t u = 0; u < T; ++u) {
            double dot = 0.0;
            for (std::size_t h = 0; h < H; ++h)
                dot += tr.q(t, h) * tr.k(u, h);
            w[u] = dot * inv_sqrt_h;
        }
        softmax_inplace(w, T);
        double *ctx = tr.ctx.row(t);
        for (std::size_t u = 0; u < T; ++u) {
            const double a = w[u];
            const double *vu = tr.v.row(u);
            for (std::size_t h = 0; h < H; ++h)
                ctx[h] += a * vu[h];
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        double *e = tr.e.row(t);
        affine(p.w_ao, tr.ctx.row(t), nullptr, e);
        const double *h1p = tr.h1p.row(t);
        for (std::size_t h = 0; h < H; ++h)
            e[h] += h1p[h];
        tanh_inplace(e, H);
    }
    return tr;
}

// dE -> parameter grads (+ nothing returned for the input frames)
void encoder_backward(const ToyModelParams &p, const Mat &frames,
                      const EncoderTrace &tr, const Mat &de,
                      ToyModelParams &grads) {
    const std::size_t T = frames.rows, H = p.hidden_dim;
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(H));

    Mat dh1(T, H), dq(T, H), dk(T, H), dv(T, H);
    std::vector<double> depre(H), dctx(H), dattw(T), dscore(T);

    for (std::size_t t = 0; t < T; ++t) {
        std::copy(de.row(t), de.row(t) + H, depre.data());
        tanh_backward_inplace(tr.e.row(t), depre.data(), H);
        for (std::size_t h = 0; h < H; ++h)
            dh1(t, h) += depre[h];
        std::fill(dctx.begin(), dctx.end(), 0.0);
        matvec_transpose_acc(p.w_ao, depre.data(), dctx.data());
        outer_acc(grads.w_ao, depre.data(), tr.ctx.row(t));

        const double *aw = tr.attw.row(t);
        double mix = 0.0;
        for (std::size_t u = 0; u < T; ++u) {
            double dot = 0.0;
            const double *vu = tr.v.row(u);
            for (std::size_t h = 0; h < H; ++h)
                dot += dctx[h] * vu[h];
            dattw[u] = dot;
            mix += aw[u] * dot;
            for (std::size_t h = 0; h < H; ++h)
                dv(u, h) += aw[u] * dctx[h];
        }
        for (std::size_t u = 0; u < T; ++u)
            dscore[u] = aw[u] * (dattw[u] - mix);
        for (std::size_t u = 0; u < T; ++u) {
            const double g = dscore[u] * inv_sqrt_h;
            const double *ku = tr.k.row(u);
            const double *qt = tr.q.row(t);
            for (std::size_t h = 0; h < H; ++h) {
                dq(t, h) += g * ku[h];
                dk(u, h) += g * qt[h];
            }
        }
    }

    std::vector<double> dh1pre(H);
    for (std::size_t t = 0; t < T; ++t) {
        // the position channels are constants, so d(h1p) == d(h1)
        outer_acc(grads.wq, dq.row(t), tr.h1p.row(t));
        outer_acc(grads.wk, dk.row(t), tr.h1p.row(t));
        outer_acc(grads.wv, dv.row(t), tr.h1p.row(t));
        matvec_transpose_acc(p.wq, dq.row(t), dh1.row(t));
        matvec_transpose_acc(p.wk, dk.row(t), dh1.row(t));
        matvec_transpose_acc(p.wv, dv.row(t), dh1.row(t));

        std::copy(dh1.row(t), dh1.row(t) + H, dh1pre.data());
        tanh_backward_inplace(tr.h1.row(t), dh1pre.data(), H);
        outer_acc(grads.w_in, dh1pre.data(), frames.row(t));
        for (std::size_t h = 0; h < H; ++h)
            grads.b_in.d[h] += dh1pre[h];
    }
}

struct CrossProj {
    Mat ck, cv; // T x H
};

CrossProj project_encoder(const ToyModelParams &p, const Mat &e) {
    CrossProj proj;
    proj.ck = Mat(e.rows, p.hidden_dim);
    proj.cv = Mat(e.rows, p.hidden_dim);
    for (std::size_t t = 0; t < e.rows; ++t) {
        affine(p.w_ck, e.row(t), nullptr, proj.ck.row(t));
        affine(p.w_cv, e.row(t), nullptr, proj.cv.row(t));
    }
    return proj;
}

struct DecoderTrace {
    std::vector<int> inputs;  // BOS, y_0 .. y_{L-2}
    std::vector<int> outputs; // y_0 .. y_{L-1}  (ends with EOS)
    Mat eo, qd, aw, c, s, probs;
    double ce_sum = 0.0;
};

DecoderTrace decode_teacher(const ToyModelParams &p, const CrossProj &proj,
                            std::span<const int> target_ids) {
    const std::size_t L = target_ids.size(), H = p.hidden_dim,
                      T = proj.ck.rows, Dv = p.token_ids().count();
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(H));
    const TokenIds ids = p.token_ids();

    DecoderTrace tr;
    tr.inputs.resize(L);
    tr.outputs.assign(target_ids.begin(), target_ids.end());
    tr.eo = Mat(L, H);
    tr.qd = Mat(L, H);
    tr.aw = Mat(L, T);
    tr.c = Mat(L, H);
    tr.s = Mat(L, H);
    tr.probs = Mat(L, Dv);

    std::vector<double> s_prev(H, 0.0), tmp(H), logits(Dv);
    for (std::size_t t = 0; t < L; ++t) {
        tr.inputs[t] = t == 0 ? ids.bos() : target_ids[t - 1];
        double *eo = tr.eo.row(t);
        const double *er = p.emb.row(tr.inputs[t]);
        const double *pr = p.pos.row(t);
        for (std::size_t h = 0; h < H; ++h)
            eo[h] = er[h] + pr[h];
        add_sinusoidal_position(t, eo, H);

        double *qd = tr.qd.row(t);
        affine(p.w_qd, eo, &p.b_qd, qd);
        affine(p.w_qs, s_prev.data(), nullptr, tmp.data());
        for (std::size_t h = 0; h < H; ++h)
            qd[h] += tmp[h];
        tanh_inplace(qd, H);

        double *aw = tr.aw.row(t);
        for (std::size_t u = 0; u < T; ++u) {
            double dot = 0.0;
            const double *ku = proj.ck.row(u);
            for (std::size_t h = 0; h < H; ++h)
                dot += qd[h] * ku[h];
            aw[u] = dot * inv_sqrt_h;
        }
        softmax_inplace(aw, T);
        double *c = tr.c.row(t);
        for (std::size_t u = 0; u < T; ++u) {
            const double a = aw[u];
            const double *vu = proj.cv.row(u);
            for (std::size_t h = 0; h < H; ++h)
                c[h] += a * vu[h];
        }

        double *s = tr.s.row(t);
        affine(p.w_m1, eo, &p.b_m, s);
        affine(p.w_m2, c, nullptr, tmp.data());
        for (std::size_t h = 0; h < H; ++h)
            s[h] += tmp[h];
        affine(p.w_m3, s_prev.data(), nullptr, tmp.data());
        for (std::size_t h = 0; h < H; ++h)
            s[h] += tmp[h];
        tanh_inplace(s, H);

        affine(p.w_out, s, &p.b_out, logits.data());
        const double log_z = softmax_inplace(logits.data(), Dv);
        std::copy(logits.begin(), logits.end(), tr.probs.row(t));
        // stable CE from the same pass: log p(y) = logit(y) - logZ, and the
        // probs row already holds exp(logit - logZ)
        (void)log_z;
        tr.ce_sum += -std::log(std::max(tr.probs(t, target_ids[t]), 1e-300));

        std::copy(s, s + H, s_prev.data());
    }
    return tr;
}

// scale multiplies every per-step CE gradient; accumulates into grads and de.
void decoder_backward(const ToyModelParams &p, const Mat &enc_out,
                      const CrossProj &proj, const DecoderTrace &tr,
                      double scale, ToyModelParams &grads, Mat &de) {
    const std::size_t L = tr.outputs.size(), H = p.hidden_dim,
                      T = proj.ck.rows, Dv = p.token_ids().count();
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(H));

    Mat dck(T, H), dcv(T, H);
    std::vector<double> ds_carry(H, 0.0), dlogits(Dv), ds(H), dspre(H), deo(H),
        dc(H), dqd(H), dqdpre(H), daw(T), dscore(T);
    std::vector<double> zero_state(H, 0.0);

    for (std::size_t t = L; t-- > 0;) {
        const double *s_prev = t == 0 ? zero_state.data() : tr.s.row(t - 1);

        std::copy(tr.probs.row(t), tr.probs.row(t) + Dv, dlogits.data());
        dlogits[tr.outputs[t]] -= 1.0;
        for (double &x : dlogits)
            x *= scale;
        outer_acc(grads.w_out, dlogits.data(), tr.s.row(t));
        for (std::size_t i = 0; i < Dv; ++i)
            grads.b_out.d[i] += dlogits[i];

        std::copy(ds_carry.begin(), ds_carry.end(), ds.begin());
        matvec_transpose_acc(p.w_out, dlogits.data(), ds.data());

        std::copy(ds.begin(), ds.end(), dspre.begin());
        tanh_backward_inplace(tr.s.row(t), dspre.data(), H);
        outer_acc(grads.w_m1, dspre.data(), tr.eo.row(t));
        outer_acc(grads.w_m2, dspre.data(), tr.c.row(t));
        outer_acc(grads.w_m3, dspre.data(), s_prev);
        for (std::size_t h = 0; h < H; ++h)
            grads.b_m.d[h] += dspre[h];

        std::fill(deo.begin(), deo.end(), 0.0);
        std::fill(dc.begin(), dc.end(), 0.0);
        matvec_transpose_acc(p.w_m1, dspre.data(), deo.data());
        matvec_transpose_acc(p.w_m2, dspre.data(), dc.data());

        // cross-attention
        const double *aw = tr.aw.row(t);
        double mix = 0.0;
        for (std::size_t u = 0; u < T; ++u) {
            double dot = 0.0;
            const double *vu = proj.cv.row(u);
            for (std::size_t h = 0; h < H; ++h)
                dot += dc[h] * vu[h];
            daw[u] = dot;
            mix += aw[u] * dot;
            for (std::size_t h = 0; h < H; ++h)
                dcv(u, h) += aw[u] * dc[h];
        }
        std::fill(dqd.begin(), dqd.end(), 0.0);
        for (std::size_t u = 0; u < T; ++u) {
            dscore[u] = aw[u] * (daw[u] - mix);
            const double g = dscore[u] * inv_sqrt_h;
            const double *ku = proj.ck.row(u);
            const double *qd = tr.qd.row(t);
            for (std::size_t h = 0; h < H; ++h) {
                dqd[h] += g * ku[h];
                dck(u, h) += g * qd[h];
            }
        }

        std::copy(dqd.begin(), dqd.end(), dqdpre.begin());
        tanh_backward_inplace(tr.qd.row(t), dqdpre.data(), H);
        outer_acc(grads.w_qd, dqdpre.data(), tr.eo.row(t));
        outer_acc(grads.w_qs, dqdpre.data(), s_prev);
        for (std::size_t h = 0; h < H; ++h)
            grads.b_qd.d[h] += dqdpre[h];
        matvec_transpose_acc(p.w_qd, dqdpre.data(), deo.data());

        double *demb = grads.emb.row(tr.inputs[t]);
        double *dpos = grads.pos.row(t);
        for (std::size_t h = 0; h < H; ++h) {
            demb[h] += deo[h];
            dpos[h] += deo[h];
        }

        // gradient into s_{t-1} via the state transform and the query
        std::fill(ds_carry.begin(), ds_carry.end(), 0.0);
        matvec_transpose_acc(p.w_m3, dspre.data(), ds_carry.data());
        matvec_transpose_acc(p.w_qs, dqdpre.data(), ds_carry.data());
    }

    // keys/values chain back into the encoder output
    for (std::size_t u = 0; u < T; ++u) {
        outer_acc(grads.w_ck, dck.row(u), enc_out.row(u));
        outer_acc(grads.w_cv, dcv.row(u), enc_out.row(u));
        matvec_transpose_acc(p.w_ck, dck.row(u), de.row(u));
        matvec_transpose_acc(p.w_cv, dcv.row(u), de.row(u));
    }
}

std::map<std::string, int> ctc_vocab(const SyntheticTask &task) {
    std::map<std::string, int> vocab;
    for (int k = 0; k < task.vocab_size; ++k)
        vocab[symbol_text(k)] = k + 1; // 0 is blank
    return vocab;
}

std::vector<int> stream_to_ids(const TogglStream &stream, const TokenIds &ids,
                               int vocab_size) {
    std::vector<int> out;
    out.reserve(stream.items.size() + 1);
    for (const auto &item : stream.items) {
        switch (item.kind) {
        case ItemKind::next:
            out.push_back(ids.next());
            break;
        case ItemKind::prev:
            out.push_back(ids.prev());
            break;
        case ItemKind::lexical:
            out.push_back(symbol_id(item.text, vocab_size));
            break;
        }
    }
    out.push_back(ids.eos());
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// loss

LossBreakdown loss(const ToyModelParams &params, const SyntheticTask &task,
                   const Mat &frames,
                   std::span<const PermutationTarget> permutation_targets,
                   const TrainConfig &config, ToyModelParams *grads,
                   bool error_on_infeasible) {
    config.validate();
    if (permutation_targets.empty())
        throw DataError("loss: no permutation targets");
    if (frames.rows == 0)
        throw DataError("loss: empty frame matrix");
    if (frames.cols != static_cast<std::size_t>(params.feature_dim))
        throw DataError("loss: frame feature dim mismatch");

    const TokenIds ids = params.token_ids();
    const EncoderTrace enc = encode(params, frames);
    const CrossProj proj = project_encoder(params, enc.e);

    // attention branch: min over permutations (or the canonical one)
    std::size_t chosen = 0;
    DecoderTrace best_trace;
    bool have_trace = false;
    if (config.pit_enabled) {
        for (std::size_t i = 0; i < permutation_targets.size(); ++i) {
            const auto target_ids = stream_to_ids(permutation_targets[i].stream,
                                                  ids, params.vocab_size);
            if (target_ids.size() > static_cast<std::size_t>(params.max_target_len))
                throw DataError("loss: target length " +
                                std::to_string(target_ids.size()) +
                                " exceeds max_target_len");
            DecoderTrace trace = decode_teacher(params, proj, target_ids);
            if (!have_trace || trace.ce_sum < best_trace.ce_sum) {
                best_trace = std::move(trace);
                chosen = i;
                have_trace = true;
            }
        }
    } else {
        for (std::size_t i = 0; i < permutation_targets.size(); ++i) {
            if (!permutation_targets[i].canonical)
                continue;
            const auto target_ids = stream_to_ids(permutation_targets[i].stream,
                                                  ids, params.vocab_size);
            if (target_ids.size() > static_cast<std::size_t>(params.max_target_len))
                throw DataError("loss: target length exceeds max_target_len");
            best_trace = decode_teacher(params, proj, target_ids);
            chosen = i;
            have_trace = true;
            break;
        }
        if (!have_trace)
            throw DataError("loss: no canonical permutation target");
    }

    const std::size_t L = best_trace.outputs.size();
    const double att_loss = best_trace.ce_sum / static_cast<double>(L);
    const double lambda = config.ctc_weight;

    // canonical stream feeds the CTC branch regardless of the chosen
    // permutation; control tokens are stripped from its target
    const PermutationTarget *canonical = nullptr;
    for (const auto &t : permutation_targets)
        if (t.canonical)
            canonical = &t;
    if (canonical == nullptr)
        throw DataError("loss: no canonical permutation target");

    LossBreakdown breakdown;
    breakdown.perm_index = chosen;

    Mat de(enc.e.rows, enc.e.cols); // dLoss/dE accumulated over both branches
    const bool want_grads = grads != nullptr;

    double ctc_loss = 0.0;
    if (lambda > 0.0) {
        const Mat dup = ctc::duplicate_frames(enc.e, config.duplication_factor);
        const std::size_t Tc = dup.rows, Cv = params.vocab_size + 1;
        const ctc::Target target =
            ctc::make_target(canonical->stream, ctc_vocab(task));
        if (!ctc::feasible(Tc, target)) {
            if (error_on_infeasible)
                throw DataError(
                    "loss: CTC target infeasible after duplication (factor " +
                    std::to_string(config.duplication_factor) + " too small)");
            breakdown.ctc_skipped = true;
        } else {
            ctc::FrameProbs fp;
            fp.frames = Tc;
            fp.vocab = Cv;
            fp.p.resize(Tc * Cv);
            for (std::size_t k = 0; k < Tc; ++k) {
                affine(params.w_ctc, dup.row(k), &params.b_ctc, &fp.p[k * Cv]);
                softmax_inplace(&fp.p[k * Cv], Cv);
            }
            const ctc::ForwardBackward fb = ctc::forward_backward(fp, target);
            ctc_loss = -fb.logprob / static_cast<double>(Tc);

            if (want_grads) {
                const double scale = lambda / static_cast<double>(Tc);
                std::vector<double> dlogit(Cv);
                const int n = config.duplication_factor;
                for (std::size_t k = 0; k < Tc; ++k) {
                    const double *g = &fb.grad_logp[k * Cv];
                    const double *pk = &fp.p[k * Cv];
                    double gsum = 0.0;
                    for (std::size_t v = 0; v < Cv; ++v)
                        gsum += g[v];
                    for (std::size_t v = 0; v < Cv; ++v)
                        dlogit[v] = scale * (g[v] - pk[v] * gsum);
                    outer_acc(grads->w_ctc, dlogit.data(), dup.row(k));
                    for (std::size_t v = 0; v < Cv; ++v)
                        grads->b_ctc.d[v] += dlogit[v];
                    matvec_transpose_acc(params.w_ctc, dlogit.data(),
                                         de.row(k / static_cast<std::size_t>(n)));
                }
            }
        }
    }

    breakdown.attention = att_loss;
    breakdown.ctc = ctc_loss;
    breakdown.total = (1.0 - lambda) * att_loss + lambda * ctc_loss;

    if (want_grads) {
        const double att_scale = (1.0 - lambda) / static_cast<double>(L);
        if (att_scale != 0.0)
            decoder_backward(params, enc.e, proj, best_trace, att_scale, *grads, de);
        encoder_backward(params, frames, enc, de, *grads);
    }
    return breakdown;
}

// ---------------------------------------------------------------------------
// greedy decoding

DecodeResult decode_greedy(const ToyModelParams &params, const Mat &frames,
                           const DecodeOptions &options) {
    if (options.max_len < 1)
        throw ConfigError("decode_greedy: max_len must be >= 1");
    if (frames.rows == 0)
        throw DataError("decode_greedy: empty frame matrix");

    const TokenIds ids = params.token_ids();
    const std::size_t H = params.hidden_dim, Dv = ids.count();
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(H));
    const int max_len =
        std::min(options.max_len, params.max_target_len);

    const EncoderTrace enc = encode(params, frames);
    const CrossProj proj = project_encoder(params, enc.e);
    const std::size_t T = enc.e.rows;

    DecodeResult result;
    std::vector<double> s_prev(H, 0.0), eo(H), qd(H), tmp(H), c(H), aw(T),
        s(H), logits(Dv);
    int prev_id = ids.bos();
    int consecutive_controls = 0;
    result.truncated = true;
    for (int t = 0; t < max_len; ++t) {
        const double *er = params.emb.row(prev_id);
        const double *pr = params.pos.row(t);
        for (std::size_t h = 0; h < H; ++h)
            eo[h] = er[h] + pr[h];
        add_sinusoidal_position(static_cast<std::size_t>(t), eo.data(), H);
        affine(params.w_qd, eo.data(), &params.b_qd, qd.data());
        affine(params.w_qs, s_prev.data(), nullptr, tmp.data());
        for (std::size_t h = 0; h < H; ++h)
            qd[h] += tmp[h];
        tanh_inplace(qd.data(), H);
        for (std::size_t u = 0; u < T; ++u) {
            double dot = 0.0;
            const double *ku = proj.ck.row(u);
            for (std::size_t h = 0; h < H; ++h)
                dot += qd[h] * ku[h];
            aw[u] = dot * inv_sqrt_h;
        }
        softmax_inplace(aw.data(), T);
        std::fill(c.begin(), c.end(), 0.0);
        for (std::size_t u = 0; u < T; ++u) {
            const double a = aw[u];
            const double *vu = proj.cv.row(u);
            for (std::size_t h = 0; h < H; ++h)
                c[h] += a * vu[h];
        }
        affine(params.w_m1, eo.data(), &params.b_m, s.data());
        affine(params.w_m2, c.data(), nullptr, tmp.data());
        for (std::size_t h = 0; h < H; ++h)
            s[h] += tmp[h];
        affine(params.w_m3, s_prev.data(), nullptr, tmp.data());
        for (std::size_t h = 0; h < H; ++h)
            s[h] += tmp[h];
        tanh_inplace(s.data(), H);
        affine(params.w_out, s.data(), &params.b_out, logits.data());

        logits[ids.bos()] = -std::numeric_limits<double>::infinity();
        const bool mask_controls =
            !options.allow_control_tokens ||
            (options.max_consecutive_controls > 0 &&
             consecutive_controls >= options.max_consecutive_controls);
        if (mask_controls) {
            logits[ids.next()] = -std::numeric_limits<double>::infinity();
            logits[ids.prev()] = -std::numeric_limits<double>::infinity();
        }

        int arg = 0;
        for (std::size_t v = 1; v < Dv; ++v)
            if (logits[v] > logits[arg])
                arg = static_cast<int>(v);
        if (arg == ids.eos()) {
            result.truncated = false;
            break;
        }
        result.token_ids.push_back(arg);
        if (ids.is_control(arg)) {
            ++consecutive_controls;
            result.stream.items.push_back(arg == ids.next() ? StreamItem::next()
                                                            : StreamItem::prev());
        } else {
            consecutive_controls = 0;
            result.stream.items.push_back(
                StreamItem::lexical_token(symbol_text(arg)));
        }
        prev_id = arg;
        std::copy(s.begin(), s.end(), s_prev.begin());
    }
    return result;
}

std::vector<std::string> ctc_greedy_decode(const ToyModelParams &params,
                                           const Mat &frames,
                                           int duplication_factor) {
    if (frames.rows == 0)
        throw DataError("ctc_greedy_decode: empty frame matrix");
    const EncoderTrace enc = encode(params, frames);
    const Mat dup = ctc::duplicate_frames(enc.e, duplication_factor);
    const std::size_t Cv = params.vocab_size + 1;

    std::vector<std::string> out;
    std::vector<double> logits(Cv);
    int prev = ctc::kBlank;
    for (std::size_t k = 0; k < dup.rows; ++k) {
        affine(params.w_ctc, dup.row(k), &params.b_ctc, logits.data());
        int arg = 0;
        for (std::size_t v = 1; v < Cv; ++v)
            if (logits[v] > logits[arg])
                arg = static_cast<int>(v);
        if (arg != ctc::kBlank && arg != prev)
            out.push_back(symbol_text(arg - 1));
        prev = arg;
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'G', 'C', 'K', 'P', 'T', '0', '1'};

} // namespace

void save_checkpoint(const std::string &path, const ToyModelParams &params,
                     const SyntheticTask &task, const std::string &config_hash) {
    params.check_finite();
    json header;
    header["format_version"] = 1;
    header["task"] = {{"vocab_size", task.vocab_size},
                      {"frames_per_symbol", task.frames_per_symbol},
                      {"feature_dim", task.feature_dim},
                      {"noise_std", task.noise_std},
                      {"max_speakers", task.max_speakers},
                      {"normalize_energy", task.normalize_energy},
                      {"embedding_seed", task.embedding_seed}};
    header["model"] = {{"hidden_dim", params.hidden_dim},
                       {"max_target_len", params.max_target_len}};
    header["config_hash"] = config_hash;
    json tensors = json::array();
    for (const auto &[name, m] : params.tensors())
        tensors.push_back({{"name", name}, {"rows", m->rows}, {"cols", m->cols}});
    header["tensors"] = tensors;

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const uint64_t len = header_str.size();
    out.write(reinterpret_cast<const char *>(&len), sizeof(len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto &[_, m] : params.tensors())
        out.write(reinterpret_cast<const char *>(m->d.data()),
                  static_cast<std::streamsize>(m->d.size() * sizeof(double)));
    if (!out)
        throw DataError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw DataError("not a toggl checkpoint: " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char *>(&len), sizeof(len));
    if (!in || len > (1u << 20))
        throw DataError("corrupt checkpoint header: " + path);
    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    json header = json::parse(header_str, nullptr, false);
    if (header.is_discarded())
        throw DataError("corrupt checkpoint header JSON: " + path);
    if (header.value("format_version", 0) != 1)
        throw DataError("unsupported checkpoint version in " + path);

    Checkpoint ckpt;
    try {
        const auto &t = header.at("task");
        ckpt.task.vocab_size = t.at("vocab_size").get<int>();
        ckpt.task.frames_per_symbol = t.at("frames_per_symbol").get<int>();
        ckpt.task.feature_dim = t.at("feature_dim").get<int>();
        ckpt.task.noise_std = t.at("noise_std").get<double>();
        ckpt.task.max_speakers = t.at("max_speakers").get<int>();
        ckpt.task.normalize_energy = t.at("normalize_energy").get<bool>();
        ckpt.task.embedding_seed = t.at("embedding_seed").get<uint64_t>();
        ckpt.config_hash = header.at("config_hash").get<std::string>();

        ModelConfig model;
        model.hidden_dim = header.at("model").at("hidden_dim").get<int>();
        model.max_target_len = header.at("model").at("max_target_len").get<int>();
        ckpt.params = ToyModelParams::init(ckpt.task, model, 0);

        auto expected = ckpt.params.tensors();
        const auto &tensors = header.at("tensors");
        if (tensors.size() != expected.size())
            throw DataError("checkpoint tensor count mismatch in " + path);
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const auto &[name, m] = expected[i];
            if (tensors[i].at("name").get<std::string>() != name ||
                tensors[i].at("rows").get<std::size_t>() != m->rows ||
                tensors[i].at("cols").get<std::size_t>() != m->cols)
                throw DataError("checkpoint tensor layout mismatch at '" +
                                std::string(name) + "' in " + path);
            in.read(reinterpret_cast<char *>(m->d.data()),
                    static_cast<std::streamsize>(m->d.size() * sizeof(double)));
            if (!in)
                throw DataError("truncated checkpoint data in " + path);
        }
    } catch (const json::exception &e) {
        throw DataError("corrupt checkpoint header in " + path + ": " + e.what());
    }
    ckpt.params.check_finite();
    return ckpt;
}

} // namespace toggl::toy
