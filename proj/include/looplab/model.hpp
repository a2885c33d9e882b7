// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Middle-looped transformer: prelude blocks embed the tokens into e, a shared
// recurrent stack is applied T times to the state h with e injected linearly
// each loop, and coda blocks read the final state out through the tied
// unembedding.
//
// Token batches are flat: a batch of b sequences of length s is one vector of
// b*s ids, and every [rows x d] activation holds the b sequences as
// consecutive segments of s rows. All kernels are row-independent except
// attention, which never crosses a segment boundary.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "looplab/autodiff/ops.hpp"
#include "looplab/dynamics.hpp"
#include "looplab/rng.hpp"

namespace looplab {

inline constexpr int kByteVocab = 256;
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr int kVocabSize = 259;

struct ModelConfig {
    std::size_t vocab = kVocabSize;
    std::size_t d = 64;
    std::size_t n_heads = 4;
    std::size_t prelude_layers = 1;
    std::size_t recurrent_layers = 1;
    std::size_t coda_layers = 1;
    std::size_t mlp_ratio = 4;
    InjectionMode mode = InjectionMode::parcae_diagonal;
    bool prelude_norm = true;
    bool qk_norm = false;
    double rope_theta = 50000.0;
    double norm_eps = 1e-6;
    double sigma0 = -1.0;  // negative: sqrt(2 / (5 d))
    std::uint64_t init_seed = 0;

    std::size_t d_ff() const { return mlp_ratio * d; }
    double init_std() const { return std::sqrt(2.0 / (5.0 * static_cast<double>(d))); }
    double state_sigma() const { return sigma0 < 0.0 ? init_std() : sigma0; }

    void validate() const {
        if (d == 0 || n_heads == 0 || d % n_heads != 0)
            throw std::invalid_argument("model: d must be a positive multiple of n_heads");
        if (rope_theta > 0.0 && (d / n_heads) % 2 != 0)
            throw std::invalid_argument("model: rotary embedding needs an even head width");
        if (vocab == 0) throw std::invalid_argument("model: empty vocabulary");
        if (mlp_ratio == 0) throw std::invalid_argument("model: mlp_ratio must be positive");
        if (!(norm_eps > 0.0)) throw std::invalid_argument("model: norm_eps must be positive");
    }
};

/// Pre-norm transformer block without biases.
struct Block {
    Tensor attn_norm;  // [d]
    Tensor wq, wk, wv, wo;  // [d x d]
    Tensor mlp_norm;   // [d]
    Tensor w_fc;       // [d_ff x d]
    Tensor w_proj;     // [d x d_ff]
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Injection operands already discretized on the tape.
struct Injection {
    Tensor A_bar;  // parcae: [d]
    Tensor B_bar;  // parcae: [d x d]
};

struct LoopState {
    Tensor h;
    std::size_t t = 0;
    std::vector<double> state_norms;  // ||h_t|| for t = 0..T
    std::vector<double> residuals;    // ||h_t - h_{t-1}|| for t = 1..T
};

namespace detail {

inline double row_norm(const double* x, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[j] * x[j];
    return std::sqrt(s);
}

}  // namespace detail

/// Mean over rows of the per-row l2 norm. For a single row this is ||h||.
inline double state_norm(const Tensor& h) {
    const std::size_t d = h.cols(), rows = h.size() / d;
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += detail::row_norm(h.data().data() + r * d, d);
    return s / static_cast<double>(rows);
}

/// Mean over rows of ||h_T - h_prev||.
inline double recurrent_residual(const Tensor& h_T, const Tensor& h_prev) {
    if (h_T.shape() != h_prev.shape()) throw std::invalid_argument("recurrent_residual: shape mismatch");
    const std::size_t d = h_T.cols(), rows = h_T.size() / d;
    double s = 0.0;
    std::vector<double> diff(d);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) diff[j] = h_T[r * d + j] - h_prev[r * d + j];
        s += detail::row_norm(diff.data(), d);
    }
    return s / static_cast<double>(rows);
}

/// i.i.d. N(0, sigma0^2) state of shape [n x d].
inline Tensor init_state(std::size_t n, std::size_t d, double sigma0, Rng& rng) {
    if (!(sigma0 >= 0.0)) throw std::invalid_argument("init_state: sigma0 must be nonnegative");
    std::vector<double> v(n * d);
    for (auto& x : v) x = sigma0 == 0.0 ? 0.0 : rng.normal(0.0, sigma0);
    return Tensor::from({n, d}, std::move(v));
}

/// Initial state for a batch of sequences; sequence i draws from stream (seed, first_index + i),
/// so its h0 does not depend on the rest of the batch.
inline Tensor init_state_batch(std::size_t n_seqs, std::size_t seq_len, std::size_t d, double sigma0,
                               std::uint64_t seed, std::uint64_t first_index = 0) {
    std::vector<double> v;
    v.reserve(n_seqs * seq_len * d);
    for (std::size_t i = 0; i < n_seqs; ++i) {
        Rng rng = Rng::stream(seed, first_index + i);
        const Tensor h = init_state(seq_len, d, sigma0, rng);
        v.insert(v.end(), h.data().begin(), h.data().end());
    }
    return Tensor::from({n_seqs * seq_len, d}, std::move(v));
}

class LoopedModel {
   public:
    ModelConfig config;
    Tensor embedding;  // [V x d], also the unembedding
    std::vector<Block> prelude, recurrent, coda;
    Tensor prelude_norm_gain;  // [d], present iff config.prelude_norm
    Tensor final_norm_gain;    // [d]
    // parcae-diagonal
    Tensor log_A, delta_raw;  // [d]
    Tensor B, C;              // [d x d]
    // concatenation
    Tensor W;  // [d x 2d]

    explicit LoopedModel(ModelConfig cfg) : config(std::move(cfg)) {
        config.validate();
        Rng rng(config.init_seed, 0x1417);
        const std::size_t d = config.d, dff = config.d_ff();
        const double sd = config.init_std();
        auto normal = [&](Shape shape) {
            std::vector<double> v(numel(shape));
            for (auto& x : v) x = rng.normal(0.0, sd);
            return Tensor::from(std::move(shape), std::move(v), true);
        };
        auto ones = [&](std::size_t n) { return Tensor::full({n}, 1.0, true); };
        auto zeros = [&](Shape shape) { return Tensor::zeros(std::move(shape), true); };
        auto make_block = [&] {
            Block b;
            b.attn_norm = ones(d);
            b.wq = normal({d, d});
            b.wk = normal({d, d});
            b.wv = normal({d, d});
            b.wo = zeros({d, d});
            b.mlp_norm = ones(d);
            b.w_fc = normal({dff, d});
            b.w_proj = zeros({d, dff});
            return b;
        };
        embedding = normal({config.vocab, d});
        for (std::size_t i = 0; i < config.prelude_layers; ++i) prelude.push_back(make_block());
        for (std::size_t i = 0; i < config.recurrent_layers; ++i) recurrent.push_back(make_block());
        for (std::size_t i = 0; i < config.coda_layers; ++i) coda.push_back(make_block());
        if (config.prelude_norm) prelude_norm_gain = ones(d);
        final_norm_gain = ones(d);
        switch (config.mode) {
            case InjectionMode::parcae_diagonal: {
                const auto p = InjectionParams::init(d, d, d, sd, rng);
                log_A = Tensor::from({d}, p.log_A, true);
                delta_raw = Tensor::from({d}, p.delta_raw, true);
                B = Tensor::from({d, d}, p.B.data, true);
                C = Tensor::from({d, d}, p.C.data, true);
                break;
            }
            case InjectionMode::concatenation: W = normal({d, 2 * d}); break;
            case InjectionMode::addition: break;
        }
    }

    /// Every trainable array in a fixed order.
    std::vector<NamedParam> parameters() const {
        std::vector<NamedParam> out;
        out.push_back({"embedding", embedding});
        auto add_stack = [&](const std::string& prefix, const std::vector<Block>& blocks) {
            for (std::size_t i = 0; i < blocks.size(); ++i) {
                const std::string p = prefix + "." + std::to_string(i) + ".";
                const Block& b = blocks[i];
                out.push_back({p + "attn_norm", b.attn_norm});
                out.push_back({p + "wq", b.wq});
                out.push_back({p + "wk", b.wk});
                out.push_back({p + "wv", b.wv});
                out.push_back({p + "wo", b.wo});
                out.push_back({p + "mlp_norm", b.mlp_norm});
                out.push_back({p + "w_fc", b.w_fc});
                out.push_back({p + "w_proj", b.w_proj});
            }
        };
        add_stack("prelude", prelude);
        add_stack("recurrent", recurrent);
        add_stack("coda", coda);
        if (prelude_norm_gain.defined()) out.push_back({"prelude_norm", prelude_norm_gain});
        out.push_back({"final_norm", final_norm_gain});
        if (log_A.defined()) {
            out.push_back({"injection.log_A", log_A});
            out.push_back({"injection.delta_raw", delta_raw});
            out.push_back({"injection.B", B});
            out.push_back({"injection.C", C});
        }
        if (W.defined()) out.push_back({"injection.W", W});
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.tensor.size();
        return n;
    }

    Tensor block_forward(const Block& b, const Tensor& x, std::size_t seq_len) const {
        const double eps = config.norm_eps;
        const Tensor a = rms_norm(x, b.attn_norm, eps);
        Tensor q = linear(a, b.wq);
        Tensor k = linear(a, b.wk);
        const Tensor v = linear(a, b.wv);
        if (config.qk_norm) {
            const std::size_t rows = q.rows(), dh = config.d / config.n_heads;
            q = reshape(rms_norm(reshape(q, {rows * config.n_heads, dh}), Tensor(), eps), {rows, config.d});
            k = reshape(rms_norm(reshape(k, {rows * config.n_heads, dh}), Tensor(), eps), {rows, config.d});
        }
        const Tensor att = causal_attention(q, k, v, config.n_heads, seq_len, config.rope_theta);
        const Tensor x1 = add(x, linear(att, b.wo));
        const Tensor m = rms_norm(x1, b.mlp_norm, eps);
        return add(x1, linear(relu_squared(linear(m, b.w_fc)), b.w_proj));
    }

    Tensor stack_forward(const std::vector<Block>& blocks, Tensor x, std::size_t seq_len) const {
        for (const auto& b : blocks) x = block_forward(b, x, seq_len);
        return x;
    }

    /// e = RMSNorm(P(embed(tokens))) when prelude_norm is on, else the raw stack output.
    Tensor prelude_forward(const std::vector<int>& tokens, std::size_t seq_len) const {
        check_tokens(tokens, seq_len);
        Tensor x = stack_forward(prelude, embedding_lookup(tokens), seq_len);
        if (config.prelude_norm) x = rms_norm(x, prelude_norm_gain, config.norm_eps);
        return x;
    }

    Tensor embedding_lookup(const std::vector<int>& tokens) const { return looplab::embedding(embedding, tokens); }

    /// Discretized injection operands; only the parcae mode has any.
    Injection injection() const {
        if (config.mode != InjectionMode::parcae_diagonal) return {};
        const Tensor delta = softplus(delta_raw);
        return {decay(mul(delta, looplab::exp(log_A))), scale_rows(B, delta)};
    }

    /// Linear part u of one loop: Āh + B̄e, h + e, or W[h; e].
    Tensor inject(const Tensor& h, const Tensor& e, const Injection& inj) const {
        if (h.shape() != e.shape()) throw std::invalid_argument("inject: state and input shapes differ");
        switch (config.mode) {
            case InjectionMode::parcae_diagonal: return add(mul_row(h, inj.A_bar), linear(e, inj.B_bar));
            case InjectionMode::addition: return add(h, e);
            case InjectionMode::concatenation: return linear(concat_cols(h, e), W);
        }
        throw std::logic_error("inject: unknown mode");
    }

    /// One loop: the recurrent blocks applied to the injected state.
    Tensor recurrent_step(const Tensor& h, const Tensor& e, const Injection& inj, std::size_t seq_len) const {
        return stack_forward(recurrent, inject(h, e, inj), seq_len);
    }

    /// Logits [rows x V] from a final state: coda(C h) then final norm and tied unembedding.
    Tensor readout(const Tensor& h, std::size_t seq_len) const {
        Tensor x = config.mode == InjectionMode::parcae_diagonal ? linear(h, C) : h;
        x = stack_forward(coda, x, seq_len);
        x = rms_norm(x, final_norm_gain, config.norm_eps);
        return linear(x, embedding);
    }

    /// Plain-value injection parameters (parcae mode).
    InjectionParams injection_params() const {
        if (config.mode != InjectionMode::parcae_diagonal)
            throw std::logic_error("injection_params: model is not in parcae-diagonal mode");
        const std::size_t d = config.d;
        InjectionParams p;
        p.log_A.assign(log_A.data().begin(), log_A.data().end());
        p.delta_raw.assign(delta_raw.data().begin(), delta_raw.data().end());
        p.B = Matrix(d, d, std::vector<double>(B.data().begin(), B.data().end()));
        p.C = Matrix(d, d, std::vector<double>(C.data().begin(), C.data().end()));
        return p;
    }

    /// (Ā, B̄) of the injection as seen by the linear surrogate.
    LinearSystem linear_view() const {
        InjectionWeights w;
        w.d = config.d;
        if (config.mode == InjectionMode::parcae_diagonal) w.params = injection_params();
        if (config.mode == InjectionMode::concatenation)
            w.W = Matrix(config.d, 2 * config.d, std::vector<double>(W.data().begin(), W.data().end()));
        return recast_injection(config.mode, w);
    }

    /// ρ(Ā) for parcae and addition, ρ(W₁) for concatenation.
    double injection_rho() const { return spectral_radius(linear_view().A_bar).rho; }

   private:
    void check_tokens(const std::vector<int>& tokens, std::size_t seq_len) const {
        if (seq_len == 0 || tokens.empty() || tokens.size() % seq_len != 0)
            throw std::invalid_argument("model: token count must be a positive multiple of seq_len");
        for (int t : tokens)
            if (t < 0 || static_cast<std::size_t>(t) >= config.vocab)
                throw std::out_of_range("model: token " + std::to_string(t) + " outside vocabulary");
    }
};

struct ForwardResult {
    Tensor logits;
    LoopState state;
};

/// Fixed-depth forward: e = P(tokens), T loops from h0, logits = coda(C h_T).
inline ForwardResult parcae_forward(const LoopedModel& model, const std::vector<int>& tokens, std::size_t seq_len,
                                    long T, const Tensor& h0) {
    if (T < 0) throw std::invalid_argument("parcae_forward: depth must be nonnegative");
    const Tensor e = model.prelude_forward(tokens, seq_len);
    if (h0.shape() != e.shape()) throw std::invalid_argument("parcae_forward: h0 shape does not match e");
    const Injection inj = model.injection();
    LoopState st;
    st.h = h0;
    st.state_norms.push_back(state_norm(h0));
    for (long t = 0; t < T; ++t) {
        Tensor next = model.recurrent_step(st.h, e, inj, seq_len);
        st.residuals.push_back(recurrent_residual(next, st.h));
        st.state_norms.push_back(state_norm(next));
        st.h = std::move(next);
        ++st.t;
    }
    return {model.readout(st.h, seq_len), std::move(st)};
}

inline ForwardResult parcae_forward(const LoopedModel& model, const std::vector<int>& tokens, std::size_t seq_len,
                                    long T, Rng& rng) {
    const Tensor h0 = init_state(tokens.size(), model.config.d, model.config.state_sigma(), rng);
    return parcae_forward(model, tokens, seq_len, T, h0);
}

}  // namespace looplab
