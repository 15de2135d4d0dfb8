// embedding.hpp
// The two mechanisms the recommender's token-embedding path is built on:
//  - decomposed embedding fusion: frozen pretrained codebook rows and
//    learnable collaborative rows, each projected and layer-normalized,
//    concatenated and mapped back to model width by a fusion matrix;
//  - contextualized token composition: attention pooling of the usage
//    context into a vector that softly recombines all same-level token
//    embeddings, residually mixed with the static embedding by alpha,
//    plus the learnable BOS query variant for the sequence start.
#pragma once

#include <random>
#include <vector>

#include "decor/params.hpp"
#include "decor/rqvae.hpp"
#include "decor/tensor.hpp"
#include "decor/vocab.hpp"

namespace decor {

template <typename T>
struct FusedEmbeddingTable {
    TokenVocab vocab;
    int dim = 0;
    Parameter<T> e_pre;      // frozen {M*K, d}
    Parameter<T> e_collab;   // learnable {M*K, d}
    Parameter<T> w_pre;      // {d, d}
    Parameter<T> w_collab;   // {d, d}
    Parameter<T> ln_pre_gain, ln_pre_bias;        // {d}
    Parameter<T> ln_collab_gain, ln_collab_bias;  // {d}
    Parameter<T> w_fuse;     // {d, 2d}
    Parameter<T> special;    // {n_special, d}: PAD/BOS/EOS + collision digits

    static FusedEmbeddingTable init(const TokenVocab& vocab, const FrozenCodebooks<T>& pre,
                                    std::mt19937_64& rng) {
        DECOR_REQUIRE(pre.levels == vocab.levels && pre.codebook_size == vocab.codebook_size,
                      ConfigError, "codebook export does not match vocabulary layout");
        FusedEmbeddingTable t;
        t.vocab = vocab;
        t.dim = pre.dim;
        int64_t d = pre.dim;
        int64_t vcode = static_cast<int64_t>(vocab.levels) * vocab.codebook_size;
        t.e_pre = Parameter<T>("embed.E_pre", {vcode, d}, pre.data, /*frozen=*/true);
        t.e_collab = Parameter<T>("embed.E_collab", {vcode, d},
                                  normal_init<T>(static_cast<size_t>(vcode * d), 0.02, rng));
        t.w_pre = Parameter<T>("embed.W_pre", {d, d}, xavier_init<T>(d, d, rng));
        t.w_collab = Parameter<T>("embed.W_collab", {d, d}, xavier_init<T>(d, d, rng));
        t.ln_pre_gain = Parameter<T>("embed.ln_pre.gain", {d}, std::vector<T>(static_cast<size_t>(d), T(1)));
        t.ln_pre_bias = Parameter<T>("embed.ln_pre.bias", {d}, std::vector<T>(static_cast<size_t>(d), T(0)));
        t.ln_collab_gain = Parameter<T>("embed.ln_collab.gain", {d}, std::vector<T>(static_cast<size_t>(d), T(1)));
        t.ln_collab_bias = Parameter<T>("embed.ln_collab.bias", {d}, std::vector<T>(static_cast<size_t>(d), T(0)));
        t.w_fuse = Parameter<T>("embed.W_fuse", {d, 2 * d}, xavier_init<T>(d, 2 * d, rng));
        t.special = Parameter<T>("embed.special", {vocab.n_special(), d},
                                 normal_init<T>(static_cast<size_t>(vocab.n_special() * d), 0.02, rng));
        return t;
    }

    void collect_params(ParamSet<T>& out) {
        out.add(e_pre);
        out.add(e_collab);
        out.add(w_pre);
        out.add(w_collab);
        out.add(ln_pre_gain);
        out.add(ln_pre_bias);
        out.add(ln_collab_gain);
        out.add(ln_collab_bias);
        out.add(w_fuse);
        out.add(special);
    }

    // Full-vocabulary fused table {V, d}: special rows are direct lookups,
    // codebook rows go through projection, norm, concat and fusion.
    num::Tensor<T> fuse_all(T ln_eps = T(1e-5)) const {
        num::Tensor<T> pre_proj = num::layer_norm(num::matmul(e_pre.tensor, w_pre.tensor, false, true),
                                                  ln_pre_gain.tensor, ln_pre_bias.tensor, ln_eps);
        num::Tensor<T> collab_proj =
            num::layer_norm(num::matmul(e_collab.tensor, w_collab.tensor, false, true),
                            ln_collab_gain.tensor, ln_collab_bias.tensor, ln_eps);
        num::Tensor<T> fused_codes =
            num::matmul(num::concat_cols(pre_proj, collab_proj), w_fuse.tensor, false, true);
        return num::concat_rows<T>({special.tensor, fused_codes});
    }
};

// fused embedding of one token, via the same path the model uses
template <typename T>
num::Tensor<T> fuse_token(int32_t token, const FusedEmbeddingTable<T>& table) {
    DECOR_REQUIRE(token >= 0 && token < table.vocab.size(), ConfigError,
                  "fuse_token: unknown token " << token);
    return num::gather_rows(table.fuse_all(), {token});
}

// ---------------------------------------------------------------------------
// Context pooling: s_l = w^T tanh(W h_l + b), softmax over positions,
// weighted sum through a one-hidden-layer tanh MLP.
// ---------------------------------------------------------------------------

template <typename T>
struct ContextPooler {
    Parameter<T> attn_w;     // {d, d}
    Parameter<T> attn_b;     // {d}
    Parameter<T> attn_v;     // {d}, the scoring vector w
    Parameter<T> mlp_w1;     // {d, d}
    Parameter<T> mlp_b1;     // {d}
    Parameter<T> mlp_w2;     // {d, d}
    Parameter<T> mlp_b2;     // {d}

    static ContextPooler init(int64_t d, std::mt19937_64& rng) {
        ContextPooler p;
        p.attn_w = Parameter<T>("pooler.W", {d, d}, xavier_init<T>(d, d, rng));
        p.attn_b = Parameter<T>("pooler.b", {d}, std::vector<T>(static_cast<size_t>(d), T(0)));
        p.attn_v = Parameter<T>("pooler.w", {d}, normal_init<T>(static_cast<size_t>(d), 1.0 / std::sqrt(static_cast<double>(d)), rng));
        p.mlp_w1 = Parameter<T>("pooler.mlp.W1", {d, d}, xavier_init<T>(d, d, rng));
        p.mlp_b1 = Parameter<T>("pooler.mlp.b1", {d}, std::vector<T>(static_cast<size_t>(d), T(0)));
        p.mlp_w2 = Parameter<T>("pooler.mlp.W2", {d, d}, xavier_init<T>(d, d, rng));
        p.mlp_b2 = Parameter<T>("pooler.mlp.b2", {d}, std::vector<T>(static_cast<size_t>(d), T(0)));
        return p;
    }

    void collect_params(ParamSet<T>& out) {
        out.add(attn_w);
        out.add(attn_b);
        out.add(attn_v);
        out.add(mlp_w1);
        out.add(mlp_b1);
        out.add(mlp_w2);
        out.add(mlp_b2);
    }

    // Per-position scores {1, L}; they do not depend on the pooling prefix,
    // so callers score a whole context once and softmax over prefixes.
    num::Tensor<T> scores(const num::Tensor<T>& h_seq) const {
        num::Tensor<T> a = num::tanh(num::add_rowvec(num::matmul(h_seq, attn_w.tensor, false, true),
                                                     attn_b.tensor));
        return num::matmul(attn_v.tensor, a, false, true);  // {1, d} x {L, d}^T -> {1, L}
    }

    num::Tensor<T> mlp_ctx(const num::Tensor<T>& pooled) const {
        num::Tensor<T> h = num::tanh(num::add_rowvec(num::matmul(pooled, mlp_w1.tensor, false, true),
                                                     mlp_b1.tensor));
        return num::add_rowvec(num::matmul(h, mlp_w2.tensor, false, true), mlp_b2.tensor);
    }
};

// Attention-pooled context vector u over fused context embeddings {L, d}.
template <typename T>
num::Tensor<T> pool_context(const num::Tensor<T>& h_seq, const ContextPooler<T>& pooler) {
    DECOR_REQUIRE(h_seq.rows() >= 1, NumericsError, "pool_context: empty context");
    num::Tensor<T> weights = num::softmax_rows(pooler.scores(h_seq));
    return pooler.mlp_ctx(num::matmul(weights, h_seq));
}

// Prefix variant against precomputed scores; pools the first `len` rows.
template <typename T>
num::Tensor<T> pool_context_prefix(const num::Tensor<T>& h_seq, const num::Tensor<T>& scores,
                                   int64_t len, const ContextPooler<T>& pooler) {
    DECOR_REQUIRE(len >= 1 && len <= h_seq.rows(), NumericsError, "pool_context_prefix: bad length");
    num::Tensor<T> w = num::softmax_rows(num::slice_cols(scores, 0, len));
    return pooler.mlp_ctx(num::matmul(w, num::slice_rows(h_seq, 0, len)));
}

// ---------------------------------------------------------------------------
// Composition head.
// ---------------------------------------------------------------------------

template <typename T>
struct CompositionHead {
    Parameter<T> w_q;  // {d, d}
    Parameter<T> w_k;  // {d, d}
    T alpha = T(0);    // residual mix weight, config not parameter

    static CompositionHead init(int64_t d, T alpha, std::mt19937_64& rng) {
        CompositionHead h;
        h.w_q = Parameter<T>("compose.W_q", {d, d}, xavier_init<T>(d, d, rng));
        h.w_k = Parameter<T>("compose.W_k", {d, d}, xavier_init<T>(d, d, rng));
        h.alpha = alpha;
        return h;
    }

    void collect_params(ParamSet<T>& out) {
        out.add(w_q);
        out.add(w_k);
    }
};

template <typename T>
struct BosQuerySet {
    int n = 0;
    Parameter<T> queries;  // {N, d} when n >= 1

    static BosQuerySet init(int n, int64_t d, std::mt19937_64& rng) {
        BosQuerySet b;
        b.n = n;
        if (n >= 1) {
            b.queries = Parameter<T>("compose.Q_BOS", {n, d},
                                     normal_init<T>(static_cast<size_t>(n * d), 0.02, rng));
        }
        return b;
    }

    void collect_params(ParamSet<T>& out) {
        if (n >= 1) out.add(queries);
    }
};

// Raw attention distribution over a candidate set: softmax of
// <W_q u, W_k e_c'> scores, no temperature. {1, n}.
template <typename T>
num::Tensor<T> composition_attention(const num::Tensor<T>& u, const num::Tensor<T>& candidates,
                                     const CompositionHead<T>& head) {
    DECOR_REQUIRE(candidates.rows() >= 1, NumericsError, "composition_attention: no candidates");
    num::Tensor<T> q = num::matmul(u, head.w_q.tensor, false, true);
    num::Tensor<T> keys = num::matmul(candidates, head.w_k.tensor, false, true);
    return num::softmax_rows(num::matmul(q, keys, false, true));
}

// Keys can be shared across many compositions within one step.
template <typename T>
num::Tensor<T> composition_attention_with_keys(const num::Tensor<T>& u, const num::Tensor<T>& keys,
                                               const CompositionHead<T>& head) {
    num::Tensor<T> q = num::matmul(u, head.w_q.tensor, false, true);
    return num::softmax_rows(num::matmul(q, keys, false, true));
}

// alpha * (attn-weighted candidate mix) + (1 - alpha) * static embedding
template <typename T>
num::Tensor<T> compose_with_candidates(const num::Tensor<T>& u, const num::Tensor<T>& candidates,
                                       const num::Tensor<T>& e_static,
                                       const CompositionHead<T>& head) {
    num::Tensor<T> attn = composition_attention(u, candidates, head);
    num::Tensor<T> mixed = num::matmul(attn, candidates);
    return num::add(num::scale(mixed, head.alpha), num::scale(e_static, T(1) - head.alpha));
}

// Composition for a codebook token: candidates are the K fused embeddings
// of the token's quantization level, sliced out of a fused vocab table.
template <typename T>
num::Tensor<T> compose_token(int32_t token, const num::Tensor<T>& u,
                             const num::Tensor<T>& fused_vocab, const TokenVocab& vocab,
                             const CompositionHead<T>& head) {
    DECOR_REQUIRE(vocab.is_code(token), ConfigError,
                  "compose_token: token " << token << " has no codebook level");
    int level = vocab.level_of(token);
    num::Tensor<T> candidates =
        num::slice_rows(fused_vocab, vocab.code_base() + static_cast<int64_t>(level) * vocab.codebook_size,
                        vocab.codebook_size);
    num::Tensor<T> e_static = num::gather_rows(fused_vocab, {token});
    return compose_with_candidates(u, candidates, e_static, head);
}

// BOS composition over the learnable query set.
template <typename T>
num::Tensor<T> compose_bos(const num::Tensor<T>& u, const BosQuerySet<T>& bos,
                           const CompositionHead<T>& head, const num::Tensor<T>& e_bos_static) {
    DECOR_REQUIRE(bos.n >= 1, ConfigError, "compose_bos: BOS query set is disabled");
    return compose_with_candidates(u, bos.queries.tensor, e_bos_static, head);
}

}  // namespace decor
